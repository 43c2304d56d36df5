#include <stdio.h>
#include <stdlib.h>

#define NI 200
#define NJ 220
#define NK 240

static double A[NI][NK], B[NK][NJ], C[NI][NJ];

static void kernel_gemm(double alpha, double beta) {
  for (int i = 0; i < NI; i++)
    for (int j = 0; j < NJ; j++)
      for (int k = 0; k < NK; k++)
        C[i][j] += alpha * A[i][k] * B[k][j];
}

int main(void) {
  for (int i = 0; i < NI; i++)
    for (int k = 0; k < NK; k++) A[i][k] = (double)((i * k + 1) % NI) / NI;
  for (int k = 0; k < NK; k++)
    for (int j = 0; j < NJ; j++) B[k][j] = (double)((k * (j + 1)) % NJ) / NJ;
  kernel_gemm(1.5, 1.2);
  double sum = 0;
  for (int i = 0; i < NI; i++)
    for (int j = 0; j < NJ; j++) sum += C[i][j];
  fprintf(stderr, "checksum %f\n", sum);
  return 0;
}

#pragma once

// Synthetic evaluator: a deterministic cost model standing in for the
// compiler and the machine. Used for tests, demos and reproducible runs.
//
//   time = base_time / speedup(level of outermost parallel loop)
//          * nested_parallel_penalty^(parallel loops - 1)
//          * tile term * interchange_factor^(interchanges) * noise
//
// The tile term scores the best-matching tiling with a kernel over the
// log2 distance to a preferred size vector; every further tiling costs
// retile_penalty.

#include <cmath>
#include <cstdint>
#include <limits>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mctree/errors.hpp"
#include "mctree/evaluate.hpp"
#include "mctree/loopmodel.hpp"
#include "mctree/rewrite.hpp"
#include "mctree/transforms.hpp"

namespace mctree {

struct TileAffinity {
  std::vector<std::int64_t> preferred;  // empty: tiling never helps
  double gain = 0.5;                    // factor at an exact match
  double width = 0.1;                   // growth per log2 unit of distance
  double mismatch_factor = 1.0;         // factor when the dimension count differs
  double retile_penalty = 1.2;          // per tiling beyond the first

  /// Factor for a single tiling.
  double kernel(const Tile& t) const {
    if (preferred.empty() || t.sizes.size() != preferred.size()) return mismatch_factor;
    double distance = 0.0;
    for (std::size_t d = 0; d < preferred.size(); ++d)
      distance += std::abs(std::log2(static_cast<double>(t.sizes[d])) -
                           std::log2(static_cast<double>(preferred[d])));
    return gain * std::exp(width * distance);
  }
};

struct CostModel {
  double base_time = 1.0;
  std::vector<double> parallel_speedup;  // indexed by loop depth, 1.0 beyond
  double nested_parallel_penalty = 1.1;
  TileAffinity tile_affinity;
  double interchange_factor = 1.02;
  std::vector<std::string> illegal_patterns;  // regexes over full pragma text
  std::uint64_t noise_seed = 0;
  double noise_amplitude = 0.0;  // relative, uniform in [1-a, 1+a]

  double speedup_at(int level) const {
    if (level < 0 || static_cast<std::size_t>(level) >= parallel_speedup.size()) return 1.0;
    return parallel_speedup[static_cast<std::size_t>(level)];
  }
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Relative time of one nest's configuration, before noise.
inline double relative_cost(const CostModel& m, const Configuration& config) {
  int outermost = std::numeric_limits<int>::max();
  int parallel = 0;
  for_each_loop(config.result, [&](const Loop& l, int depth) {
    if (l.parallelized) {
      ++parallel;
      outermost = std::min(outermost, depth);
    }
  });
  double factor = 1.0;
  if (parallel > 0) {
    factor /= m.speedup_at(outermost);
    factor *= std::pow(m.nested_parallel_penalty, parallel - 1);
  }

  int tiles = 0;
  double best_kernel = std::numeric_limits<double>::infinity();
  for (const auto& t : config.transformations) {
    if (const auto* tile = std::get_if<Tile>(&t)) {
      ++tiles;
      best_kernel = std::min(best_kernel, m.tile_affinity.kernel(*tile));
    } else if (std::holds_alternative<Interchange>(t)) {
      factor *= m.interchange_factor;
    }
  }
  if (tiles > 0) factor *= best_kernel * std::pow(m.tile_affinity.retile_penalty, tiles - 1);
  return factor;
}

}  // namespace detail

/// Deterministic outcome of a program configuration under `model`.
inline Outcome synthetic_evaluate(const CostModel& model, const ProgramConfig& config) {
  std::vector<std::regex> illegal;
  for (const auto& p : model.illegal_patterns) illegal.emplace_back(p);

  double factor = 1.0;
  std::string key;
  for (const auto& nest : config.nests) {
    key += "nest " + std::to_string(nest.nest_index) + "\n";
    for (const auto& t : nest.transformations) {
      const auto pragma = render_pragma(t);
      for (std::size_t i = 0; i < illegal.size(); ++i)
        if (std::regex_search(pragma, illegal[i]))
          return Outcome::failed(Status::CompileFailed,
                                 "synthetic: '" + pragma + "' rejected by /" + model.illegal_patterns[i] + "/");
      key += pragma + "\n";
    }
    factor *= detail::relative_cost(model, nest);
  }
  if (model.noise_amplitude > 0) {
    const auto h = detail::splitmix64(detail::fnv1a(key) ^ detail::splitmix64(model.noise_seed));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    factor *= 1.0 + model.noise_amplitude * (2.0 * u - 1.0);
  }
  return Outcome::ok(model.base_time * factor);
}

/// Single-nest form.
inline Outcome synthetic_evaluate(const CostModel& model, const Configuration& config) {
  ProgramConfig pc;
  pc.nests.push_back(config);
  return synthetic_evaluate(model, pc);
}

inline CostModel cost_model_from_json(const nlohmann::json& j) {
  CostModel m;
  try {
    m.base_time = j.value("base_time", m.base_time);
    if (j.contains("parallel_speedup")) m.parallel_speedup = j.at("parallel_speedup").get<std::vector<double>>();
    m.nested_parallel_penalty = j.value("nested_parallel_penalty", m.nested_parallel_penalty);
    m.interchange_factor = j.value("interchange_factor", m.interchange_factor);
    if (j.contains("tile_affinity")) {
      const auto& t = j.at("tile_affinity");
      auto& a = m.tile_affinity;
      if (t.contains("preferred")) a.preferred = t.at("preferred").get<std::vector<std::int64_t>>();
      a.gain = t.value("gain", a.gain);
      a.width = t.value("width", a.width);
      a.mismatch_factor = t.value("mismatch_factor", a.mismatch_factor);
      a.retile_penalty = t.value("retile_penalty", a.retile_penalty);
    }
    if (j.contains("illegal")) m.illegal_patterns = j.at("illegal").get<std::vector<std::string>>();
    if (j.contains("noise")) {
      m.noise_seed = j.at("noise").value("seed", m.noise_seed);
      m.noise_amplitude = j.at("noise").value("amplitude", m.noise_amplitude);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("cost model: ") + e.what());
  }
  if (!(m.base_time > 0)) throw ValidationError("cost model: base_time must be positive");
  for (double s : m.parallel_speedup)
    if (!(s > 0)) throw ValidationError("cost model: parallel_speedup entries must be positive");
  if (m.noise_amplitude < 0 || m.noise_amplitude >= 1)
    throw ValidationError("cost model: noise amplitude must be in [0, 1)");
  for (const auto& p : m.illegal_patterns) {
    try {
      std::regex re(p);
    } catch (const std::regex_error& e) {
      throw ValidationError("cost model: bad illegal pattern '" + p + "': " + e.what());
    }
  }
  return m;
}

class SyntheticEvaluator : public Evaluator {
 public:
  SyntheticEvaluator(CostModel model, std::vector<LoopNest> nests, std::string identity = {})
      : model_(std::move(model)), nests_(std::move(nests)), identity_(std::move(identity)) {}

  BaselineResult baseline() override {
    return {nests_, synthetic_evaluate(model_, make_baseline(nests_)), serialize_loopnests(nests_)};
  }

  Outcome evaluate(const ProgramConfig& config, std::uint64_t) override { return synthetic_evaluate(model_, config); }

  std::string identity() const override { return "synthetic\n" + identity_; }

  const CostModel& model() const { return model_; }

 private:
  CostModel model_;
  std::vector<LoopNest> nests_;
  std::string identity_;
};

}  // namespace mctree

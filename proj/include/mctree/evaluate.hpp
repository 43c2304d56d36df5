#pragma once

// Turning configurations into outcomes by compiling and timing the program.
//
// The baseline compile appends `-mllvm <loopnest-flag>=<file> -g` so the
// compiler reports the loop nests it can transform; derived configurations
// are compiled from the rewritten source with `-fopenmp -Werror=pass-failed`
// so a transformation the compiler cannot apply fails the build.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mctree/errors.hpp"
#include "mctree/loopmodel.hpp"
#include "mctree/process.hpp"
#include "mctree/rewrite.hpp"
#include "mctree/transforms.hpp"

namespace mctree {

enum class Status { Ok, CompileFailed, RunFailed, Timeout };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Ok: return "ok";
    case Status::CompileFailed: return "compile_failed";
    case Status::RunFailed: return "run_failed";
    case Status::Timeout: return "timeout";
  }
  return "?";
}

inline Status status_from_string(const std::string& s) {
  if (s == "ok") return Status::Ok;
  if (s == "compile_failed") return Status::CompileFailed;
  if (s == "run_failed") return Status::RunFailed;
  if (s == "timeout") return Status::Timeout;
  throw Error("unknown status '" + s + "'");
}

/// Result of evaluating one configuration. `seconds` is set iff status is Ok.
struct Outcome {
  Status status = Status::Ok;
  std::optional<double> seconds;
  std::string log_excerpt;

  static Outcome ok(double s, std::string log = {}) { return {Status::Ok, s, std::move(log)}; }
  static Outcome failed(Status s, std::string log = {}) { return {s, std::nullopt, std::move(log)}; }

  bool is_ok() const { return status == Status::Ok; }

  friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct EvalRequest {
  std::vector<std::string> compiler_cmdline;
  std::filesystem::path source;  // spelled exactly as in compiler_cmdline
  std::vector<std::string> extra_flags;
  std::optional<double> timeout_seconds;  // applies to compile and run separately
  int repeats = 1;
  std::string loopnest_flag = "-polly-output-loopnest";
};

/// Timeout for derived configurations when none was given explicitly.
inline double default_timeout(double baseline_seconds, double factor = 10.0) {
  return std::max(factor * baseline_seconds, baseline_seconds + 5.0);
}

namespace detail {

inline bool looks_like_source(const std::string& arg) {
  static const char* const exts[] = {".c", ".cc", ".cpp", ".cxx", ".c++", ".C", ".cp"};
  const auto ext = std::filesystem::path(arg).extension().string();
  return !arg.empty() && arg[0] != '-' && std::find(std::begin(exts), std::end(exts), ext) != std::end(exts);
}

}  // namespace detail

/// The single source file of a compiler command line. Throws
/// ConfigurationError if there is none or more than one.
inline std::filesystem::path find_source(const std::vector<std::string>& cmdline) {
  std::vector<std::string> found;
  for (std::size_t i = 1; i < cmdline.size(); ++i) {
    if (cmdline[i] == "-o" || cmdline[i] == "-MF" || cmdline[i] == "-include") {
      ++i;
      continue;
    }
    if (detail::looks_like_source(cmdline[i])) found.push_back(cmdline[i]);
  }
  if (found.size() != 1)
    throw ConfigurationError(found.empty() ? "no source file in the compiler command line"
                                           : "several source files in the compiler command line; pass --source");
  return found.front();
}

/// Checks the command-line contract: it links (no `-c`) and names the
/// source exactly once.
inline void validate_request(const EvalRequest& req) {
  if (req.compiler_cmdline.empty()) throw ConfigurationError("empty compiler command line");
  if (std::find(req.compiler_cmdline.begin(), req.compiler_cmdline.end(), "-c") != req.compiler_cmdline.end())
    throw ConfigurationError("the compiler command line must include the linking step (remove -c)");
  const auto n = std::count(req.compiler_cmdline.begin(), req.compiler_cmdline.end(), req.source.string());
  if (n != 1)
    throw ConfigurationError("the compiler command line must contain the source '" + req.source.string() +
                             "' exactly once, found " + std::to_string(n));
  if (req.repeats < 1) throw ConfigurationError("repeats must be >= 1");
}

/// Replaces the source argument with `replacement`.
inline std::vector<std::string> substitute_source(const std::vector<std::string>& cmdline,
                                                  const std::filesystem::path& original,
                                                  const std::filesystem::path& replacement) {
  auto out = cmdline;
  for (auto& a : out)
    if (a == original.string()) a = replacement.string();
  return out;
}

/// Points the output executable (`-o X`, `-oX`, or the implicit a.out) at `exe`.
inline std::vector<std::string> redirect_output(const std::vector<std::string>& cmdline,
                                                const std::filesystem::path& exe) {
  std::vector<std::string> out;
  bool replaced = false;
  for (std::size_t i = 0; i < cmdline.size(); ++i) {
    if (cmdline[i] == "-o" && i + 1 < cmdline.size()) {
      out.push_back("-o");
      out.push_back(exe.string());
      ++i;
      replaced = true;
    } else if (cmdline[i].size() > 2 && cmdline[i].compare(0, 2, "-o") == 0) {
      out.push_back("-o" + exe.string());
      replaced = true;
    } else {
      out.push_back(cmdline[i]);
    }
  }
  if (!replaced) {
    out.push_back("-o");
    out.push_back(exe.string());
  }
  return out;
}

/// Name of the executable the command line produces.
inline std::filesystem::path output_name(const std::vector<std::string>& cmdline) {
  for (std::size_t i = 0; i < cmdline.size(); ++i) {
    if (cmdline[i] == "-o" && i + 1 < cmdline.size()) return std::filesystem::path(cmdline[i + 1]).filename();
    if (cmdline[i].size() > 2 && cmdline[i].compare(0, 2, "-o") == 0)
      return std::filesystem::path(cmdline[i].substr(2)).filename();
  }
  return "a.out";
}

namespace detail {

inline std::optional<std::chrono::duration<double>> as_duration(std::optional<double> s) {
  if (!s) return std::nullopt;
  return std::chrono::duration<double>(*s);
}

inline std::string excerpt(const ProcessResult& r, const std::string& phase) {
  std::ostringstream os;
  os << phase << ": ";
  switch (r.kind) {
    case ProcessResult::Kind::Exited: os << "exit code " << r.exit_code; break;
    case ProcessResult::Kind::Signaled: os << "killed by signal " << r.signal; break;
    case ProcessResult::Kind::TimedOut: os << "timed out after " << r.seconds << " s"; break;
  }
  if (!r.output_tail.empty()) os << "\n" << r.output_tail;
  return os.str();
}

/// Compiles with `cmd`, then runs `exe` `repeats` times; the reported time
/// is the fastest run.
inline Outcome compile_and_run(const std::vector<std::string>& cmd, const std::filesystem::path& exe,
                               const std::filesystem::path& workdir, const EvalRequest& req,
                               std::optional<double> timeout) {
  const auto limit = as_duration(timeout);
  auto compiled = run_process(cmd, limit, workdir / "compile.log");
  if (compiled.kind == ProcessResult::Kind::TimedOut)
    return Outcome::failed(Status::Timeout, excerpt(compiled, "compile"));
  if (!compiled.succeeded()) return Outcome::failed(Status::CompileFailed, excerpt(compiled, "compile"));

  std::optional<double> best;
  const auto exe_abs = std::filesystem::absolute(exe);
  for (int rep = 0; rep < req.repeats; ++rep) {
    auto ran = run_process({exe_abs.string()}, limit, workdir / "run.log");
    if (ran.kind == ProcessResult::Kind::TimedOut) return Outcome::failed(Status::Timeout, excerpt(ran, "run"));
    if (!ran.succeeded()) return Outcome::failed(Status::RunFailed, excerpt(ran, "run"));
    best = best ? std::min(*best, ran.seconds) : ran.seconds;
  }
  return Outcome::ok(*best);
}

}  // namespace detail

struct BaselineEvaluation {
  std::string loopnests_json;  // empty unless the compile succeeded
  Outcome outcome;
};

/// Experiment 0: compiles the unmodified program asking the compiler for its
/// loop-nest description and debug locations, then times the executable.
/// Throws ConfigurationError if the compile succeeds but writes no
/// loop-nest file.
inline BaselineEvaluation evaluate_baseline(const EvalRequest& req, const std::filesystem::path& workdir) {
  validate_request(req);
  std::filesystem::create_directories(workdir);
  const auto json_path = std::filesystem::absolute(workdir / "loopnests.json");
  std::filesystem::remove(json_path);
  const auto exe = workdir / output_name(req.compiler_cmdline);

  auto cmd = redirect_output(req.compiler_cmdline, std::filesystem::absolute(exe));
  cmd.insert(cmd.end(), req.extra_flags.begin(), req.extra_flags.end());
  cmd.push_back("-mllvm");
  cmd.push_back(req.loopnest_flag + "=" + json_path.string());
  cmd.push_back("-g");

  BaselineEvaluation result;
  result.outcome = detail::compile_and_run(cmd, exe, workdir, req, req.timeout_seconds);
  if (result.outcome.status == Status::CompileFailed ||
      (result.outcome.status == Status::Timeout && !std::filesystem::exists(exe)))
    return result;
  std::ifstream in(json_path);
  if (!in)
    throw ConfigurationError("the compiler wrote no loop-nest file at " + json_path.string() + " (is " +
                             req.loopnest_flag + " supported?)");
  std::ostringstream ss;
  ss << in.rdbuf();
  result.loopnests_json = ss.str();
  return result;
}

/// Compiles the rewritten source in place of the original and times it.
/// Infrastructure problems (compiler not found) throw instead of being
/// reported as CompileFailed.
inline Outcome evaluate_config(const EvalRequest& req, const std::filesystem::path& rewritten,
                               const std::filesystem::path& workdir, std::optional<double> timeout) {
  validate_request(req);
  if (!std::filesystem::exists(rewritten)) throw ConfigurationError("no rewritten source at " + rewritten.string());
  std::filesystem::create_directories(workdir);
  const auto exe = workdir / output_name(req.compiler_cmdline);

  auto cmd = substitute_source(req.compiler_cmdline, req.source, rewritten);
  cmd = redirect_output(cmd, std::filesystem::absolute(exe));
  cmd.insert(cmd.end(), req.extra_flags.begin(), req.extra_flags.end());
  cmd.push_back("-fopenmp");
  cmd.push_back("-Werror=pass-failed");
  return detail::compile_and_run(cmd, exe, workdir, req, timeout);
}

// ---------------------------------------------------------------------------
// Evaluator seam used by the search driver.

struct BaselineResult {
  std::vector<LoopNest> nests;
  Outcome outcome;
  std::string loopnests_json;
};

class Evaluator {
 public:
  virtual ~Evaluator() = default;

  virtual BaselineResult baseline() = 0;
  virtual Outcome evaluate(const ProgramConfig& config, std::uint64_t experiment) = 0;

  /// Called with the baseline outcome, including when it comes from a
  /// resumed log rather than from baseline().
  virtual void baseline_known(const Outcome&) {}

  /// Text identifying the evaluator's inputs; hashed into the log header so
  /// a resume with different inputs is refused.
  virtual std::string identity() const = 0;
};

/// Evaluates by rewriting, compiling and timing the real program. Timed runs
/// are strictly sequential.
class CompilerEvaluator : public Evaluator {
 public:
  CompilerEvaluator(EvalRequest req, std::filesystem::path output_dir, bool keep_files = false,
                    double timeout_factor = 10.0)
      : req_(std::move(req)),
        output_dir_(std::move(output_dir)),
        keep_files_(keep_files),
        timeout_factor_(timeout_factor) {
    validate_request(req_);
    std::ifstream in(req_.source, std::ios::binary);
    if (!in) throw ConfigurationError("cannot read source " + req_.source.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    source_text_ = ss.str();
  }

  BaselineResult baseline() override {
    auto base = evaluate_baseline(req_, output_dir_ / "rewritten" / "exp0");
    BaselineResult r{{}, base.outcome, base.loopnests_json};
    if (!base.loopnests_json.empty()) r.nests = parse_loopnests(base.loopnests_json);
    nests_ = r.nests;
    if (!keep_files_) std::filesystem::remove_all(output_dir_ / "rewritten" / "exp0");
    return r;
  }

  void set_nests(std::vector<LoopNest> nests) { nests_ = std::move(nests); }

  void baseline_known(const Outcome& o) override {
    if (o.seconds) derived_timeout_ = default_timeout(*o.seconds, timeout_factor_);
  }

  Outcome evaluate(const ProgramConfig& config, std::uint64_t experiment) override {
    const auto workdir = output_dir_ / "rewritten" / ("exp" + std::to_string(experiment));
    std::filesystem::create_directories(workdir);
    const auto rewritten = workdir / req_.source.filename();
    {
      std::ofstream out(rewritten, std::ios::binary);
      out << rewrite_source(source_text_, nests_, config, req_.source);
    }
    auto timeout = req_.timeout_seconds ? req_.timeout_seconds : derived_timeout_;
    Outcome o = evaluate_config(req_, rewritten, workdir, timeout);
    if (!keep_files_) std::filesystem::remove_all(workdir);
    return o;
  }

  std::string identity() const override {
    std::string id = "compiler";
    for (const auto& a : req_.compiler_cmdline) id += '\0' + a;
    for (const auto& a : req_.extra_flags) id += '\0' + a;
    return id;
  }

  const std::string& source_text() const { return source_text_; }
  const EvalRequest& request() const { return req_; }

 private:
  EvalRequest req_;
  std::filesystem::path output_dir_;
  bool keep_files_;
  double timeout_factor_;
  std::optional<double> derived_timeout_;
  std::string source_text_;
  std::vector<LoopNest> nests_;
};

}  // namespace mctree

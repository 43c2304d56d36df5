// mctree: loop-transformation autotuner.
//
//   mctree autotune [options] -- <compiler command line>
//   mctree autotune --synthetic model.json [options]
//   mctree expand --loopnests nests.json [--select N]...
//   mctree export-dot --log run.jsonl [-o out.dot] [--csv out.csv]
//   mctree replay --log run.jsonl [--experiment N] [--source prog.c]
//
// Exit codes: 0 success, 1 usage, 2 baseline failure, 3 internal error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mctree/mctree.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitBaseline = 2;
constexpr int kExitInternal = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw mctree::Error("cannot write " + p.string());
  out << text;
}

std::vector<std::int64_t> parse_sizes(const std::string& text) {
  std::vector<std::int64_t> sizes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v < 2)
      throw UsageError("--tile-sizes expects a comma-separated list of integers >= 2, got '" + text + "'");
    sizes.push_back(v);
  }
  if (sizes.empty()) throw UsageError("--tile-sizes must not be empty");
  return sizes;
}

struct CliConfig {
  std::string tile_sizes = "4,16,64,256,1024";
  bool no_parallelize = false;
  std::uint64_t max_experiments = 0;  // 0: unlimited
  double wall_clock = 0;              // seconds, 0: unlimited
  double timeout = 0;                 // seconds, 0: derived from the baseline
  double timeout_factor = 10.0;
  int repeats = 1;
  std::string log = "mctree-log.jsonl";
  std::string output_dir = ".";
  std::string synthetic;
  std::string loopnests;
  std::string source;
  std::string loopnest_flag = "-polly-output-loopnest";
  std::string dot;
  std::string csv;
  bool keep_files = false;
  bool resume = false;
  bool quiet = false;
  std::vector<std::string> compiler_cmdline;

  mctree::SearchParams params() const { return {parse_sizes(tile_sizes), !no_parallelize}; }
  mctree::Budget budget() const {
    mctree::Budget b;
    if (max_experiments) b.max_experiments = max_experiments;
    if (wall_clock > 0) b.wall_clock_seconds = wall_clock;
    return b;
  }
};

std::vector<mctree::LoopNest> load_nests_for_model(const nlohmann::json& model, const std::string& loopnests_path) {
  if (!loopnests_path.empty()) return mctree::parse_loopnests(read_file(loopnests_path));
  if (model.contains("loopnests")) return mctree::loopnests_from_json(model.at("loopnests"));
  throw UsageError("synthetic mode needs loop nests: pass --loopnests or add \"loopnests\" to the model");
}

void print_best(const mctree::SearchState& state, std::ostream& os) {
  if (!state.best) {
    os << "no successful experiment\n";
    return;
  }
  const auto& best = state.at(*state.best);
  os << "best: experiment " << best.number << ", " << *best.outcome.seconds << " s (baseline "
     << *state.experiments.front().outcome.seconds << " s)\n";
  for (const auto& nest : best.config.nests) {
    if (nest.transformations.empty()) continue;
    os << "function " << nest.result.function << ":\n";
    for (const auto& t : nest.transformations) os << "  " << mctree::render_pragma(t) << "\n";
  }
  if (best.config.transformation_count() == 0) os << "  (no transformation)\n";
}

class ProgressPrinter : public mctree::BestFirstStrategy {
 public:
  explicit ProgressPrinter(bool quiet) : quiet_(quiet) {}

  void report_outcome(const mctree::SearchState& state, const mctree::Experiment& e) override {
    if (quiet_) return;
    std::cerr << "[" << e.number << "] ";
    if (const auto* t = e.added())
      std::cerr << mctree::render_pragma(*t);
    else
      std::cerr << "baseline";
    if (e.outcome.is_ok()) {
      std::cerr << " -> " << *e.outcome.seconds << " s";
      if (state.best == e.number) std::cerr << " (new best)";
    } else {
      std::cerr << " -> " << mctree::to_string(e.outcome.status);
    }
    std::cerr << "\n";
  }

 private:
  bool quiet_;
};

int autotune(const CliConfig& cfg) {
  const auto params = cfg.params();
  const auto budget = cfg.budget();
  const fs::path output_dir = cfg.output_dir;
  fs::create_directories(output_dir);

  std::unique_ptr<mctree::Evaluator> evaluator;
  mctree::CompilerEvaluator* compiler = nullptr;
  if (!cfg.synthetic.empty()) {
    if (!cfg.compiler_cmdline.empty()) throw UsageError("--synthetic and a compiler command line are exclusive");
    const auto model_text = read_file(cfg.synthetic);
    nlohmann::json model_json;
    try {
      model_json = nlohmann::json::parse(model_text);
    } catch (const nlohmann::json::parse_error& e) {
      throw UsageError("cannot parse " + cfg.synthetic + ": " + e.what());
    }
    auto nests = load_nests_for_model(model_json, cfg.loopnests);
    std::string identity = model_text + "\n" + mctree::serialize_loopnests(nests);
    evaluator = std::make_unique<mctree::SyntheticEvaluator>(mctree::cost_model_from_json(model_json),
                                                             std::move(nests), std::move(identity));
  } else {
    if (cfg.compiler_cmdline.empty())
      throw UsageError("autotune needs a compiler command line after '--' or --synthetic MODEL");
    mctree::EvalRequest req;
    req.compiler_cmdline = cfg.compiler_cmdline;
    req.source = cfg.source.empty() ? mctree::find_source(cfg.compiler_cmdline) : fs::path(cfg.source);
    if (cfg.timeout > 0) req.timeout_seconds = cfg.timeout;
    req.repeats = cfg.repeats;
    req.loopnest_flag = cfg.loopnest_flag;
    mctree::validate_request(req);
    auto ev = std::make_unique<mctree::CompilerEvaluator>(req, output_dir, cfg.keep_files, cfg.timeout_factor);
    compiler = ev.get();
    evaluator = std::move(ev);
  }

  ProgressPrinter progress(cfg.quiet);
  mctree::SearchState state;
  if (cfg.resume) {
    state = mctree::resume_log(cfg.log, params, evaluator->identity());
    if (compiler) compiler->set_nests(state.baseline_nests);
    mctree::LogWriter log(cfg.log, /*append=*/true);
    mctree::continue_search(state, *evaluator, params, budget, &log, &progress);
  } else {
    mctree::LogWriter log(cfg.log);
    try {
      state = mctree::run(*evaluator, params, budget, &log, &progress);
    } catch (const mctree::ConfigurationError& e) {
      throw mctree::BaselineFailed(e.what());
    }
  }

  print_best(state, std::cout);
  if (compiler && state.best) {
    const auto& req = compiler->request();
    const auto out = mctree::rewritten_path(output_dir, req.source);
    write_file(out, mctree::rewrite_source(compiler->source_text(), state.baseline_nests, state.at(*state.best).config,
                                           req.source));
    std::cout << "rewritten source: " << out.string() << "\n";
  }
  if (!cfg.dot.empty()) write_file(cfg.dot, mctree::export_dot(state));
  if (!cfg.csv.empty()) write_file(cfg.csv, mctree::export_progress_csv(state));
  return 0;
}

int expand(const std::string& loopnests, const std::string& tile_sizes, bool no_parallelize,
           const std::vector<std::size_t>& select, bool compact) {
  auto nests = mctree::parse_loopnests(read_file(loopnests));
  auto config = mctree::make_baseline(nests);
  const auto sizes = parse_sizes(tile_sizes);
  for (auto index : select) {
    auto children = mctree::derive_children(config, sizes, !no_parallelize);
    if (index >= children.size())
      throw UsageError("--select " + std::to_string(index) + " out of range (" + std::to_string(children.size()) +
                       " children)");
    config = children[index].config;
  }
  for (const auto& nest : config.nests)
    for (const auto& t : nest.transformations) std::cout << "applied: " << mctree::render_pragma(t) << "\n";

  auto children = mctree::derive_children(config, sizes, !no_parallelize);
  mctree::ChildCounts counts;
  for (std::size_t i = 0; i < children.size(); ++i) {
    const auto& nest = children[i].config.nests[children[i].nest];
    const auto& t = nest.transformations.back();
    if (std::holds_alternative<mctree::Tile>(t))
      ++counts.tilings;
    else if (std::holds_alternative<mctree::Interchange>(t))
      ++counts.interchanges;
    else
      ++counts.parallelizations;
    std::cout << i << "\t" << nest.result.function << "\t"
              << (compact ? mctree::render_pragma_compact(t) : mctree::render_pragma(t)) << "\n";
  }
  std::cout << "children: " << children.size() << " (tile " << counts.tilings << ", interchange "
            << counts.interchanges << ", parallelize_thread " << counts.parallelizations << ")\n";
  return 0;
}

int export_dot(const std::string& log, const std::string& out, const std::string& csv) {
  auto contents = mctree::read_log(log);
  const auto dot = mctree::export_dot(contents.state);
  if (out.empty() || out == "-")
    std::cout << dot;
  else
    write_file(out, dot);
  if (!csv.empty()) write_file(csv, mctree::export_progress_csv(contents.state));
  return 0;
}

int replay(const std::string& log, std::optional<std::uint64_t> experiment, const std::string& source,
           const std::string& output_dir) {
  auto contents = mctree::read_log(log);
  const auto& state = contents.state;
  std::cout << "experiments: " << state.experiments.size() << ", expansions: " << state.expansions.size()
            << ", frontier: " << state.frontier.size() << "\n";
  std::cout << "best-so-far:\n";
  for (const auto& [n, s] : mctree::best_so_far_trace(state)) std::cout << "  " << n << "\t" << s << "\n";

  const auto chosen = experiment ? *experiment : state.best.value_or(0);
  if (chosen >= state.experiments.size()) throw UsageError("no experiment " + std::to_string(chosen) + " in the log");
  const auto& e = state.at(chosen);
  std::cout << "experiment " << chosen << ": " << mctree::to_string(e.outcome.status);
  if (e.outcome.seconds) std::cout << ", " << *e.outcome.seconds << " s";
  std::cout << "\n";
  for (const auto& nest : e.config.nests)
    for (const auto& t : nest.transformations) std::cout << "  " << mctree::render_pragma(t) << "\n";

  if (!source.empty()) {
    const auto out = mctree::rewritten_path(output_dir, source);
    write_file(out, mctree::rewrite_source(read_file(source), state.baseline_nests, e.config, source));
    std::cout << "rewritten source: " << out.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Everything after "--" is the compiler command line.
  std::vector<std::string> tool_args;
  CliConfig cfg;
  bool after_separator = false;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (!after_separator && a == "--") {
      after_separator = true;
      continue;
    }
    (after_separator ? cfg.compiler_cmdline : tool_args).push_back(a);
  }
  std::reverse(tool_args.begin(), tool_args.end());

  CLI::App app{"autotuner over a tree of loop transformations", "mctree"};
  app.require_subcommand(1);

  auto* tune = app.add_subcommand("autotune", "search for the fastest transformation sequence");
  tune->add_option("--tile-sizes", cfg.tile_sizes, "comma-separated tile sizes")->capture_default_str();
  tune->add_flag("--no-parallelize", cfg.no_parallelize, "do not derive parallelize_thread children");
  tune->add_option("--max-experiments", cfg.max_experiments, "stop after this many experiments (0: unlimited)");
  tune->add_option("--wall-clock", cfg.wall_clock, "stop after this many seconds (0: unlimited)");
  tune->add_option("--timeout", cfg.timeout, "per-phase timeout in seconds (default: from the baseline time)");
  tune->add_option("--timeout-factor", cfg.timeout_factor, "derived timeout = max(F * baseline, baseline + 5 s)")
      ->capture_default_str();
  tune->add_option("--repeats", cfg.repeats, "timed runs per configuration; the minimum counts")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  tune->add_option("--log", cfg.log, "experiment log (JSON lines)")->capture_default_str();
  tune->add_option("--output-dir", cfg.output_dir, "directory for rewritten/ and intermediate files")
      ->capture_default_str();
  tune->add_option("--synthetic", cfg.synthetic, "evaluate with the cost model in this JSON file");
  tune->add_option("--loopnests", cfg.loopnests, "loop-nest JSON for synthetic mode");
  tune->add_option("--source", cfg.source, "source file to rewrite (default: the one in the command line)");
  tune->add_option("--loopnest-flag", cfg.loopnest_flag, "compiler option that writes the loop-nest JSON")
      ->capture_default_str();
  tune->add_option("--dot", cfg.dot, "write the experiment tree as DOT");
  tune->add_option("--csv", cfg.csv, "write the progress trace as CSV");
  tune->add_flag("--keep-files", cfg.keep_files, "keep rewritten/exp<N>/ directories");
  tune->add_flag("--resume", cfg.resume, "continue the search recorded in --log");
  tune->add_flag("-q,--quiet", cfg.quiet, "no per-experiment progress on stderr");

  std::string ex_nests, ex_sizes = "4,16,64,256,1024";
  bool ex_no_par = false, ex_compact = false;
  std::vector<std::size_t> ex_select;
  auto* exp = app.add_subcommand("expand", "list the children of a configuration without compiling anything");
  exp->add_option("--loopnests", ex_nests, "loop-nest JSON")->required();
  exp->add_option("--tile-sizes", ex_sizes, "comma-separated tile sizes")->capture_default_str();
  exp->add_flag("--no-parallelize", ex_no_par, "do not derive parallelize_thread children");
  exp->add_option("--select", ex_select, "descend into child N first (repeatable)");
  exp->add_flag("--compact", ex_compact, "omit generated floor/tile ids");

  std::string dot_log, dot_out, dot_csv;
  auto* dot = app.add_subcommand("export-dot", "render the experiment tree of a log as DOT");
  dot->add_option("--log", dot_log, "experiment log")->required();
  dot->add_option("-o,--output", dot_out, "output file (default: stdout)");
  dot->add_option("--csv", dot_csv, "also write the progress trace as CSV");

  std::string rp_log, rp_source, rp_out = ".";
  std::optional<std::uint64_t> rp_exp;
  auto* rep = app.add_subcommand("replay", "rebuild a logged search and show its result");
  rep->add_option("--log", rp_log, "experiment log")->required();
  rep->add_option("--experiment", rp_exp, "experiment to show (default: the best)");
  rep->add_option("--source", rp_source, "write this source rewritten for the experiment");
  rep->add_option("--output-dir", rp_out, "directory for rewritten/")->capture_default_str();

  try {
    app.parse(tool_args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (!cfg.compiler_cmdline.empty() && !tune->parsed())
      throw UsageError("a compiler command line is only accepted by autotune");
    if (tune->parsed()) return autotune(cfg);
    if (exp->parsed()) return expand(ex_nests, ex_sizes, ex_no_par, ex_select, ex_compact);
    if (dot->parsed()) return export_dot(dot_log, dot_out, dot_csv);
    if (rep->parsed()) return replay(rp_log, rp_exp, rp_source, rp_out);
  } catch (const UsageError& e) {
    std::cerr << "mctree: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mctree::ConfigurationError& e) {
    std::cerr << "mctree: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mctree::ParseError& e) {
    std::cerr << "mctree: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mctree::ValidationError& e) {
    std::cerr << "mctree: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mctree::ResumeError& e) {
    std::cerr << "mctree: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mctree::BaselineFailed& e) {
    std::cerr << "mctree: " << e.what() << "\n";
    return kExitBaseline;
  } catch (const std::exception& e) {
    std::cerr << "mctree: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

#pragma once

// The autotuning driver. Experiment 0 is the baseline; afterwards the
// fastest measured configuration whose children have not been explored is
// expanded, every child is evaluated and numbered, and successful children
// join the frontier. Failed configurations are recorded but never expanded.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mctree/costmodel.hpp"
#include "mctree/errors.hpp"
#include "mctree/evaluate.hpp"
#include "mctree/loopmodel.hpp"
#include "mctree/rewrite.hpp"
#include "mctree/transforms.hpp"

namespace mctree {

inline constexpr const char* kToolVersion = "1.0.0";

struct SearchParams {
  std::vector<std::int64_t> tile_sizes{4, 16, 64, 256, 1024};
  bool enable_parallel = true;
};

struct Budget {
  std::optional<std::uint64_t> max_experiments;
  std::optional<double> wall_clock_seconds;
};

struct Experiment {
  std::uint64_t number = 0;
  ProgramConfig config;
  Outcome outcome;
  bool expanded = false;
  std::optional<std::uint64_t> parent;
  std::optional<std::size_t> changed_nest;  // nest that received the last transformation

  /// The transformation this experiment added to its parent, if any.
  const Transformation* added() const {
    if (!changed_nest) return nullptr;
    return &config.nests[*changed_nest].transformations.back();
  }
};

/// Frontier order: faster first, ties to the lower experiment number.
struct FrontierEntry {
  double seconds = 0;
  std::uint64_t number = 0;

  friend bool operator<(const FrontierEntry& a, const FrontierEntry& b) {
    return std::tie(a.seconds, a.number) < std::tie(b.seconds, b.number);
  }
  friend bool operator==(const FrontierEntry&, const FrontierEntry&) = default;
};

/// An experiment taken off the frontier, and how many experiments existed
/// at that moment.
struct Expansion {
  std::uint64_t number = 0;
  std::uint64_t experiments_before = 0;

  friend bool operator==(const Expansion&, const Expansion&) = default;
};

struct SearchState {
  std::vector<LoopNest> baseline_nests;
  std::vector<Experiment> experiments;  // index == experiment number
  std::set<FrontierEntry> frontier;     // exactly the Ok, unexpanded, not-in-progress experiments
  std::optional<std::uint64_t> best;
  std::optional<std::uint64_t> expanding;  // taken off the frontier, children not all evaluated
  std::vector<Expansion> expansions;

  const Experiment& at(std::uint64_t n) const { return experiments.at(static_cast<std::size_t>(n)); }
  Experiment& at(std::uint64_t n) { return experiments.at(static_cast<std::size_t>(n)); }
};

/// Selection policy. The shipped policy is exploitation only; another
/// policy (e.g. MCTS) plugs in here without touching the driver.
class Strategy {
 public:
  virtual ~Strategy() = default;
  /// Removes and returns the next experiment to expand, or nullopt when done.
  virtual std::optional<std::uint64_t> pop_candidate(SearchState& state) = 0;
  virtual void report_outcome(const SearchState&, const Experiment&) {}
};

class BestFirstStrategy : public Strategy {
 public:
  std::optional<std::uint64_t> pop_candidate(SearchState& state) override {
    if (state.frontier.empty()) return std::nullopt;
    auto first = state.frontier.begin();
    const auto n = first->number;
    state.frontier.erase(first);
    return n;
  }
};

// ---------------------------------------------------------------------------
// Log records

namespace detail {

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace detail

inline nlohmann::json transformation_to_json(const Transformation& t) {
  return std::visit(
      [](const auto& x) -> nlohmann::json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Tile>)
          return {{"tile", {{"loops", x.loops}, {"sizes", x.sizes}, {"floor_ids", x.floor_ids}, {"tile_ids", x.tile_ids}}}};
        else if constexpr (std::is_same_v<T, Interchange>)
          return {{"interchange", {{"loops", x.loops}, {"permutation", x.permutation}}}};
        else
          return {{"parallelize_thread", {{"loop", x.loop}}}};
      },
      t);
}

inline Transformation transformation_from_json(const nlohmann::json& j) {
  if (j.contains("tile")) {
    const auto& t = j.at("tile");
    return Tile{t.at("loops").get<std::vector<std::string>>(), t.at("sizes").get<std::vector<std::int64_t>>(),
                t.at("floor_ids").get<std::vector<std::string>>(), t.at("tile_ids").get<std::vector<std::string>>()};
  }
  if (j.contains("interchange")) {
    const auto& t = j.at("interchange");
    return Interchange{t.at("loops").get<std::vector<std::string>>(),
                       t.at("permutation").get<std::vector<std::string>>()};
  }
  if (j.contains("parallelize_thread")) return ParallelizeThread{j.at("parallelize_thread").at("loop").get<std::string>()};
  throw Error("unknown transformation record " + j.dump());
}

inline nlohmann::json header_record(const SearchParams& params, const std::string& evaluator_identity) {
  return {{"record", "header"},
          {"tool", "mctree"},
          {"version", kToolVersion},
          {"tile_sizes", params.tile_sizes},
          {"parallelize", params.enable_parallel},
          {"identity_hash", detail::hex64(detail::fnv1a(evaluator_identity))}};
}

inline nlohmann::json experiment_record(const SearchState& state, const Experiment& e) {
  nlohmann::json j{{"record", "experiment"}, {"number", e.number}, {"status", to_string(e.outcome.status)}};
  j["seconds"] = e.outcome.seconds ? nlohmann::json(*e.outcome.seconds) : nlohmann::json(nullptr);
  j["parent"] = e.parent ? nlohmann::json(*e.parent) : nlohmann::json(nullptr);
  if (const auto* t = e.added()) {
    j["nest"] = *e.changed_nest;
    j["transformation"] = transformation_to_json(*t);
    j["pragma"] = render_pragma(*t);
  } else {
    j["loopnests"] = loopnests_to_json(state.baseline_nests);
  }
  if (!e.outcome.is_ok() && !e.outcome.log_excerpt.empty()) {
    auto log = e.outcome.log_excerpt;
    if (log.size() > 2000) log = log.substr(log.size() - 2000);
    j["log"] = log;
  }
  return j;
}

inline nlohmann::json expand_record(std::uint64_t number) { return {{"record", "expand"}, {"number", number}}; }

/// Append-only JSON-lines log, flushed after each record so an interrupted
/// run leaves a resumable file.
class LogWriter {
 public:
  explicit LogWriter(const std::filesystem::path& path, bool append = false)
      : out_(path, append ? std::ios::app | std::ios::binary : std::ios::trunc | std::ios::binary) {
    if (!out_) throw Error("cannot open log " + path.string());
  }

  void write(const nlohmann::json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Driver

namespace detail {

inline void record_experiment(SearchState& state, Experiment e, Strategy& strategy, LogWriter* log) {
  if (e.outcome.is_ok()) {
    state.frontier.insert({*e.outcome.seconds, e.number});
    if (!state.best || *e.outcome.seconds < *state.at(*state.best).outcome.seconds) state.best = e.number;
  }
  state.experiments.push_back(std::move(e));
  if (log) log->write(experiment_record(state, state.experiments.back()));
  strategy.report_outcome(state, state.experiments.back());
}

inline std::uint64_t children_recorded(const SearchState& state, std::uint64_t parent) {
  std::uint64_t n = 0;
  // Children of the expansion in progress are the most recent experiments.
  for (auto it = state.experiments.rbegin(); it != state.experiments.rend() && it->parent == parent; ++it) ++n;
  return n;
}

}  // namespace detail

/// Continues a search from `state` until the frontier is empty or the budget
/// is spent. An expansion interrupted by the budget is finished by the next
/// call.
inline void continue_search(SearchState& state, Evaluator& evaluator, const SearchParams& params,
                            const Budget& budget, LogWriter* log = nullptr, Strategy* strategy = nullptr) {
  BestFirstStrategy default_strategy;
  Strategy& policy = strategy ? *strategy : default_strategy;
  if (state.experiments.empty()) throw Error("search state has no baseline");
  evaluator.baseline_known(state.experiments.front().outcome);

  const auto start = std::chrono::steady_clock::now();
  auto exhausted = [&] {
    if (budget.max_experiments && state.experiments.size() >= *budget.max_experiments) return true;
    if (budget.wall_clock_seconds &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= *budget.wall_clock_seconds)
      return true;
    return false;
  };

  while (!exhausted()) {
    if (!state.expanding) {
      auto next = policy.pop_candidate(state);
      if (!next) return;
      state.expanding = *next;
      state.expansions.push_back({*next, state.experiments.size()});
      if (log) log->write(expand_record(*next));
    }
    const auto parent = *state.expanding;
    auto children = derive_children(state.at(parent).config, params.tile_sizes, params.enable_parallel);
    for (std::size_t i = detail::children_recorded(state, parent); i < children.size(); ++i) {
      if (exhausted()) return;
      Experiment e;
      e.number = state.experiments.size();
      e.parent = parent;
      e.changed_nest = children[i].nest;
      e.config = std::move(children[i].config);
      e.outcome = evaluator.evaluate(e.config, e.number);
      detail::record_experiment(state, std::move(e), policy, log);
    }
    state.at(parent).expanded = true;
    state.expanding.reset();
  }
}

/// Evaluates the baseline as experiment 0 and searches from there. Throws
/// BaselineFailed if the unmodified program does not compile and run.
inline SearchState run(Evaluator& evaluator, const SearchParams& params, const Budget& budget,
                       LogWriter* log = nullptr, Strategy* strategy = nullptr) {
  BestFirstStrategy default_strategy;
  Strategy& policy = strategy ? *strategy : default_strategy;
  if (log) log->write(header_record(params, evaluator.identity()));

  auto base = evaluator.baseline();
  SearchState state;
  state.baseline_nests = base.nests;
  Experiment e;
  e.number = 0;
  e.config = make_baseline(base.nests);
  e.outcome = base.outcome;
  const bool ok = e.outcome.is_ok();
  detail::record_experiment(state, std::move(e), policy, log);
  if (!ok)
    throw BaselineFailed(std::string("baseline ") + to_string(state.experiments.front().outcome.status) + "\n" +
                         state.experiments.front().outcome.log_excerpt);
  continue_search(state, evaluator, params, budget, log, &policy);
  return state;
}

/// (experiment number, seconds) for every new best time, starting with the
/// baseline.
inline std::vector<std::pair<std::uint64_t, double>> best_so_far_trace(const SearchState& state) {
  std::vector<std::pair<std::uint64_t, double>> trace;
  for (const auto& e : state.experiments) {
    if (!e.outcome.is_ok()) continue;
    if (trace.empty() || *e.outcome.seconds < trace.back().second) trace.emplace_back(e.number, *e.outcome.seconds);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Save / resume

/// Writes the whole state as a log, byte-identical to what a streaming run
/// that produced `state` would have written.
inline void save_log(const SearchState& state, const SearchParams& params, const std::string& evaluator_identity,
                     const std::filesystem::path& path) {
  LogWriter log(path);
  log.write(header_record(params, evaluator_identity));
  std::size_t next_expansion = 0;
  for (std::size_t i = 0; i <= state.experiments.size(); ++i) {
    while (next_expansion < state.expansions.size() && state.expansions[next_expansion].experiments_before == i)
      log.write(expand_record(state.expansions[next_expansion++].number));
    if (i < state.experiments.size()) log.write(experiment_record(state, state.experiments[i]));
  }
}

/// Everything a log holds. `valid_bytes` excludes a truncated final record.
struct LogContents {
  SearchParams params;
  std::string identity_hash;
  SearchState state;
  std::uintmax_t valid_bytes = 0;
  std::uintmax_t total_bytes = 0;
};

/// Parses a log without modifying it, rebuilding every configuration by
/// replaying the logged transformations from the logged baseline nests.
inline LogContents read_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ResumeError("cannot read log " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  LogContents contents;
  contents.total_bytes = text.size();
  std::vector<nlohmann::json> records;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const bool last = nl == std::string::npos || text.find_first_not_of(" \t\r\n", nl + 1) == std::string::npos;
    const std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    try {
      if (nl == std::string::npos) throw ResumeError("unterminated record");
      if (line.find_first_not_of(" \t\r") != std::string::npos) records.push_back(nlohmann::json::parse(line));
    } catch (const std::exception&) {
      if (!last) throw ResumeError("corrupt record in " + path.string() + " at byte " + std::to_string(pos));
      break;  // truncated tail from an interrupted write
    }
    pos = nl + 1;
    contents.valid_bytes = pos;
  }

  if (records.empty() || records.front().value("record", "") != "header") throw ResumeError("log has no header");
  try {
    const auto& header = records.front();
    contents.params.tile_sizes = header.at("tile_sizes").get<std::vector<std::int64_t>>();
    contents.params.enable_parallel = header.at("parallelize").get<bool>();
    contents.identity_hash = header.at("identity_hash").get<std::string>();
  } catch (const std::exception& e) {
    throw ResumeError(std::string("malformed log header: ") + e.what());
  }
  const SearchParams& params = contents.params;

  SearchState& state = contents.state;
  try {
    for (std::size_t r = 1; r < records.size(); ++r) {
      const auto& rec = records[r];
      const auto kind = rec.at("record").get<std::string>();
      if (kind == "expand") {
        const auto n = rec.at("number").get<std::uint64_t>();
        if (n >= state.experiments.size()) throw ResumeError("expansion of unknown experiment");
        state.expansions.push_back({n, state.experiments.size()});
        continue;
      }
      if (kind != "experiment") throw ResumeError("unknown record kind '" + kind + "'");
      Experiment e;
      e.number = rec.at("number").get<std::uint64_t>();
      if (e.number != state.experiments.size()) throw ResumeError("experiment numbers are not consecutive");
      e.outcome.status = status_from_string(rec.at("status").get<std::string>());
      if (!rec.at("seconds").is_null()) e.outcome.seconds = rec.at("seconds").get<double>();
      e.outcome.log_excerpt = rec.value("log", "");
      if (rec.at("parent").is_null()) {
        if (e.number != 0) throw ResumeError("only experiment 0 may lack a parent");
        state.baseline_nests = loopnests_from_json(rec.at("loopnests"));
        e.config = make_baseline(state.baseline_nests);
      } else {
        e.parent = rec.at("parent").get<std::uint64_t>();
        if (*e.parent >= e.number) throw ResumeError("parent must precede its child");
        e.changed_nest = rec.at("nest").get<std::size_t>();
        e.config = state.at(*e.parent).config;
        auto& nest = e.config.nests.at(*e.changed_nest);
        nest = extend(nest, transformation_from_json(rec.at("transformation")));
      }
      state.experiments.push_back(std::move(e));
    }
  } catch (const ResumeError&) {
    throw;
  } catch (const std::exception& e) {
    throw ResumeError(std::string("malformed log: ") + e.what());
  }
  if (state.experiments.empty()) throw ResumeError("log has no baseline experiment");

  // Expansions run one at a time, so only the last one can be incomplete.
  for (std::size_t i = 0; i < state.expansions.size(); ++i) {
    const auto n = state.expansions[i].number;
    if (i + 1 < state.expansions.size()) {
      state.at(n).expanded = true;
      continue;
    }
    const auto total = derive_children(state.at(n).config, params.tile_sizes, params.enable_parallel).size();
    if (detail::children_recorded(state, n) >= total)
      state.at(n).expanded = true;
    else
      state.expanding = n;
  }
  for (const auto& e : state.experiments) {
    if (!e.outcome.is_ok()) continue;
    if (!state.best || *e.outcome.seconds < *state.at(*state.best).outcome.seconds) state.best = e.number;
    if (!e.expanded && state.expanding != e.number) state.frontier.insert({*e.outcome.seconds, e.number});
  }
  return contents;
}

/// Rebuilds a SearchState from a log for continuing the search. A truncated
/// final record is dropped and cut from the file so appending continues
/// cleanly. Refuses logs written with different parameters or evaluator
/// inputs.
inline SearchState resume_log(const std::filesystem::path& path, const SearchParams& params,
                              const std::string& evaluator_identity) {
  auto contents = read_log(path);
  const auto expected = header_record(params, evaluator_identity);
  if (nlohmann::json(contents.params.tile_sizes) != expected["tile_sizes"])
    throw ResumeError("log was written with different tile sizes; refusing to resume");
  if (contents.params.enable_parallel != params.enable_parallel)
    throw ResumeError("log was written with a different parallelization setting; refusing to resume");
  if (contents.identity_hash != expected["identity_hash"])
    throw ResumeError("log was written for a different program or cost model; refusing to resume");
  if (!contents.state.experiments.front().outcome.is_ok()) throw ResumeError("the logged baseline failed");
  if (contents.valid_bytes < contents.total_bytes) std::filesystem::resize_file(path, contents.valid_bytes);
  return std::move(contents.state);
}

}  // namespace mctree

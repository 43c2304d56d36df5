#pragma once

// Pragma rendering and source rewriting: every source loop of a tuned nest
// gets a `#pragma clang loop id(...)` line, and the nest's transformation
// sequence is placed above its first loop.

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mctree/errors.hpp"
#include "mctree/loopmodel.hpp"
#include "mctree/transforms.hpp"

namespace mctree {

namespace detail {

template <typename Seq>
std::string join(const Seq& items) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += ',';
    if constexpr (std::is_convertible_v<decltype(item), std::string_view>)
      out += item;
    else
      out += std::to_string(item);
  }
  return out;
}

}  // namespace detail

/// Full pragma text in the explicit-id dialect. Tiling names its generated
/// loops so later transformations can refer to them.
inline std::string render_pragma(const Transformation& t) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Tile>)
          return "#pragma clang loop(" + detail::join(x.loops) + ") tile sizes(" + detail::join(x.sizes) +
                 ") floor_ids(" + detail::join(x.floor_ids) + ") tile_ids(" + detail::join(x.tile_ids) + ")";
        else if constexpr (std::is_same_v<T, Interchange>)
          return "#pragma clang loop(" + detail::join(x.loops) + ") interchange permutation(" +
                 detail::join(x.permutation) + ")";
        else
          return "#pragma clang loop(" + x.loop + ") parallelize_thread";
      },
      t);
}

/// Like render_pragma but omits the generated floor/tile ids, which the
/// dialect allows when nothing refers to them. Used for display.
inline std::string render_pragma_compact(const Transformation& t) {
  if (const auto* tile = std::get_if<Tile>(&t))
    return "#pragma clang loop(" + detail::join(tile->loops) + ") tile sizes(" + detail::join(tile->sizes) + ")";
  return render_pragma(t);
}

inline std::string render_id_pragma(const std::string& loop_id) {
  return "#pragma clang loop id(" + loop_id + ")";
}

struct Insertion {
  int line = 1;  // inserted above this 1-based line
  std::string text;

  friend bool operator==(const Insertion&, const Insertion&) = default;
};

struct RewritePlan {
  std::filesystem::path source_file;
  std::vector<Insertion> insertions;  // sorted by line, stable within a line
  std::filesystem::path output_path;
};

/// `<output_dir>/rewritten/<file name>`.
inline std::filesystem::path rewritten_path(const std::filesystem::path& output_dir,
                                            const std::filesystem::path& source) {
  return output_dir / "rewritten" / source.filename();
}

/// Whether a loop location names `source`. Compares normalized paths and
/// falls back to the file name, since compilers may report either form.
inline bool same_source_file(const std::string& location_file, const std::filesystem::path& source) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::path a = fs::weakly_canonical(fs::path(location_file), ec);
  if (ec) a = fs::path(location_file).lexically_normal();
  fs::path b = fs::weakly_canonical(source, ec);
  if (ec) b = source.lexically_normal();
  if (a == b) return true;
  return fs::path(location_file).filename() == source.filename();
}

namespace detail {

struct Line {
  std::string_view body;
  std::string_view ending;  // "\n", "\r\n" or "" for an unterminated last line
};

inline std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back({text.substr(pos), {}});
      break;
    }
    std::size_t body_end = (nl > pos && text[nl - 1] == '\r') ? nl - 1 : nl;
    lines.push_back({text.substr(pos, body_end - pos), text.substr(body_end, nl + 1 - body_end)});
    pos = nl + 1;
  }
  return lines;
}

inline std::string_view indentation(std::string_view line) {
  std::size_t n = 0;
  while (n < line.size() && (line[n] == ' ' || line[n] == '\t')) ++n;
  return line.substr(0, n);
}

}  // namespace detail

/// Computes the pragma lines to insert for every source loop of the tuned
/// nests that lives in `source` (all loops when `source` is empty).
inline RewritePlan plan_rewrite(std::string_view source_text, const std::filesystem::path& source,
                                const std::vector<LoopNest>& baseline, const ProgramConfig& config,
                                const std::filesystem::path& output_dir = ".") {
  const auto lines = detail::split_lines(source_text);
  RewritePlan plan{source, {}, rewritten_path(output_dir, source)};
  std::map<int, int> column_at_line;

  for (std::size_t n = 0; n < baseline.size(); ++n) {
    std::vector<const Loop*> loops;
    for (const Loop* l : source_loops(baseline[n]))
      if (source.empty() || same_source_file(l->location->file, source)) loops.push_back(l);
    if (loops.empty()) continue;

    for (const Loop* l : loops) {
      const auto& loc = *l->location;
      if (loc.line < 1 || static_cast<std::size_t>(loc.line) > lines.size())
        throw RewriteError("loop '" + l->id + "' is at line " + std::to_string(loc.line) +
                           " but the source has " + std::to_string(lines.size()) + " lines");
      auto [it, inserted] = column_at_line.emplace(loc.line, loc.column);
      if (!inserted) {
        if (it->second == loc.column)
          throw RewriteError("two loops share line " + std::to_string(loc.line) + ", column " +
                             std::to_string(loc.column));
        throw RewriteError("loop '" + l->id + "' shares line " + std::to_string(loc.line) +
                           " with another loop; id pragmas need one loop per line");
      }
    }

    const Loop* first = *std::min_element(loops.begin(), loops.end(), [](const Loop* a, const Loop* b) {
      return std::tie(a->location->line, a->location->column) < std::tie(b->location->line, b->location->column);
    });
    if (n < config.nests.size() && !config.nests[n].transformations.empty()) {
      const int line = first->location->line;
      for (const auto& t : config.nests[n].transformations) plan.insertions.push_back({line, render_pragma(t)});
      plan.insertions.push_back({line, ""});
    }
    for (const Loop* l : loops) plan.insertions.push_back({l->location->line, render_id_pragma(l->id)});
  }

  std::stable_sort(plan.insertions.begin(), plan.insertions.end(),
                   [](const Insertion& a, const Insertion& b) { return a.line < b.line; });
  return plan;
}

/// Applies a plan. Inserted lines take the indentation and line ending of
/// the line they precede; empty insertions become blank lines.
inline std::string apply_plan(std::string_view source_text, const RewritePlan& plan) {
  const auto lines = detail::split_lines(source_text);
  std::string_view default_ending = "\n";
  for (const auto& l : lines)
    if (!l.ending.empty()) {
      default_ending = l.ending;
      break;
    }

  std::string out;
  out.reserve(source_text.size() + plan.insertions.size() * 48);
  auto ins = plan.insertions.begin();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int lineno = static_cast<int>(i) + 1;
    const auto& line = lines[i];
    const std::string_view ending = line.ending.empty() ? default_ending : line.ending;
    for (; ins != plan.insertions.end() && ins->line == lineno; ++ins) {
      if (!ins->text.empty()) {
        out += detail::indentation(line.body);
        out += ins->text;
      }
      out += ending;
    }
    out += line.body;
    out += line.ending;
  }
  if (ins != plan.insertions.end())
    throw RewriteError("insertion at line " + std::to_string(ins->line) + " is past the end of the source");
  return out;
}

inline std::string rewrite_source(std::string_view source_text, const std::vector<LoopNest>& baseline,
                                  const ProgramConfig& config, const std::filesystem::path& source = {}) {
  return apply_plan(source_text, plan_rewrite(source_text, source, baseline, config));
}

/// Single-nest convenience form.
inline std::string rewrite_source(std::string_view source_text, const LoopNest& baseline,
                                  const Configuration& config) {
  ProgramConfig pc;
  Configuration c = config;
  c.nest_index = 0;
  pc.nests.push_back(std::move(c));
  return rewrite_source(source_text, std::vector<LoopNest>{baseline}, pc);
}

}  // namespace mctree

#pragma once

// Exporters for a finished (or interrupted) search: the experiment tree as a
// DOT digraph and the progress over time as CSV.

#include <sstream>
#include <string>

#include "mctree/rewrite.hpp"
#include "mctree/search.hpp"

namespace mctree {

struct DotStyle {
  std::string ok_color = "green";
  std::string failed_color = "red";
  std::string baseline_color = "blue";
};

namespace detail {

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out;
}

inline std::string format_seconds(double s, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << s;
  return os.str();
}

}  // namespace detail

/// One node per experiment labelled with its number, the transformation it
/// added and its time or failure kind; edges follow parent links.
inline std::string export_dot(const SearchState& state, const DotStyle& style = {}) {
  std::ostringstream os;
  os << "digraph mctree {\n";
  os << "  node [shape=box, style=filled, fontname=\"monospace\"];\n";
  for (const auto& e : state.experiments) {
    std::string label = "#" + std::to_string(e.number) + "\n";
    if (const auto* t = e.added())
      label += render_pragma_compact(*t);
    else
      label += "baseline";
    label += "\n";
    label += e.outcome.is_ok() ? detail::format_seconds(*e.outcome.seconds) + " s" : to_string(e.outcome.status);

    const std::string& color = !e.parent                ? style.baseline_color
                               : e.outcome.is_ok()      ? style.ok_color
                                                        : style.failed_color;
    os << "  n" << e.number << " [label=\"" << detail::dot_escape(label) << "\", fillcolor=\"" << detail::dot_escape(color) << "\"";
    if (!e.parent) os << ", fontcolor=\"white\"";
    os << "];\n";
  }
  for (const auto& e : state.experiments)
    if (e.parent) os << "  n" << *e.parent << " -> n" << e.number << ";\n";
  os << "}\n";
  return os.str();
}

/// `experiment,seconds,status,is_new_best`, one row per experiment.
inline std::string export_progress_csv(const SearchState& state) {
  std::ostringstream os;
  os << "experiment,seconds,status,is_new_best\n";
  std::optional<double> best;
  for (const auto& e : state.experiments) {
    bool new_best = false;
    os << e.number << ',';
    if (e.outcome.is_ok()) {
      const double s = *e.outcome.seconds;
      new_best = !best || s < *best;
      if (new_best) best = s;
      os << detail::format_seconds(s, 10);
    }
    os << ',' << to_string(e.outcome.status) << ',' << (new_best ? "true" : "false") << '\n';
  }
  return os.str();
}

}  // namespace mctree

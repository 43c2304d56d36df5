#pragma once

#include <map>
#include <string>
#include <vector>

#include "mctree/evaluate.hpp"
#include "mctree/loopmodel.hpp"

namespace mctree::testkit {

/// Evaluator returning preset outcomes by experiment number (1.0 s for
/// anything not scripted) and counting calls.
class ScriptedEvaluator : public Evaluator {
 public:
  ScriptedEvaluator(std::vector<LoopNest> nests, std::map<std::uint64_t, Outcome> outcomes)
      : nests_(std::move(nests)), outcomes_(std::move(outcomes)) {}

  BaselineResult baseline() override { return {nests_, outcome_for(0), serialize_loopnests(nests_)}; }

  Outcome evaluate(const ProgramConfig&, std::uint64_t experiment) override {
    ++calls;
    return outcome_for(experiment);
  }

  std::string identity() const override { return "scripted"; }

  int calls = 0;

 private:
  Outcome outcome_for(std::uint64_t n) const {
    auto it = outcomes_.find(n);
    return it == outcomes_.end() ? Outcome::ok(1.0) : it->second;
  }

  std::vector<LoopNest> nests_;
  std::map<std::uint64_t, Outcome> outcomes_;
};

}  // namespace mctree::testkit

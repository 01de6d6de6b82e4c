#include "mzx/experiment.hpp"

#include "mzx/philox.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

namespace mzx {

namespace {

bool same_set(std::vector<std::string> a, std::vector<std::string> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

void check_targets(const SpaceSpec& space, const std::vector<std::string>& targets,
                   const SpaceSpec& op_space, const char* what) {
  for (const auto& t : targets)
    if (!space.contains(t)) throw InvalidPipeline(std::string(what) + ": unknown subsystem '" + t + "'");
  if (!(space.restrict_to(targets) == op_space))
    throw InvalidPipeline(std::string(what) + ": operator does not match its target subsystems");
}

// A stage lowered to full-space matrices.
struct Step {
  std::optional<LinearMap> unitary;
  std::string record_key;
  std::vector<std::pair<std::string, LinearMap>> kraus;  // measurement outcomes
};

std::vector<Step> lower(const SpaceSpec& space, const std::vector<Stage>& stages) {
  std::vector<Step> steps;
  steps.reserve(stages.size());
  for (const auto& stage : stages) {
    Step step;
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, UnitaryStage>) {
            step.unitary = embed(s.op, s.targets, space);
          } else if constexpr (std::is_same_v<T, ProjectiveMeasureStage>) {
            step.record_key = s.record_key;
            const auto& sub = space.subsystem(s.subsystem);
            for (std::size_t i = 0; i < sub.dim(); ++i)
              step.kraus.emplace_back(s.outcome_labels[i], projector(space, s.subsystem, sub.labels[i]));
          } else if constexpr (std::is_same_v<T, GeneralizedMeasureStage>) {
            step.record_key = s.record_key;
            step.kraus.emplace_back("yes", embed(s.kraus.k_abs, s.targets, space));
            step.kraus.emplace_back("no", embed(s.kraus.k_noabs, s.targets, space));
          } else {
            step.record_key = s.record_key;
            auto [px, py] = detector_projectors(space);
            step.kraus.emplace_back("X", std::move(px));
            step.kraus.emplace_back("Y", std::move(py));
          }
        },
        stage);
    steps.push_back(std::move(step));
  }
  return steps;
}

// Measurement branch tree. Node i is either a measurement with children or a
// leaf carrying a terminal branch.
struct TreeNode {
  std::string record_key;
  struct Out {
    std::string label;
    double cond_prob;
    std::size_t child;
  };
  std::vector<Out> outs;
  std::optional<std::size_t> leaf;  // index into BranchTree::leaves
};

struct BranchTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<Branch> leaves;
};

class TreeBuilder {
 public:
  explicit TreeBuilder(const std::vector<Step>& steps) : steps_(steps) {}

  BranchTree build(const StateVector& initial) {
    visit(initial, 0, 1.0, {});
    return std::move(tree_);
  }

 private:
  std::size_t visit(StateVector psi, std::size_t step, double prob, Record record) {
    while (step < steps_.size() && steps_[step].unitary) psi = apply(*steps_[step++].unitary, psi);

    const std::size_t id = tree_.nodes.size();
    tree_.nodes.emplace_back();
    if (step == steps_.size()) {
      tree_.nodes[id].leaf = tree_.leaves.size();
      tree_.leaves.push_back({std::move(record), prob, std::move(psi)});
      return id;
    }

    const Step& m = steps_[step];
    tree_.nodes[id].record_key = m.record_key;
    for (const auto& [label, k] : m.kraus) {
      StateVector out = apply(k, psi);
      const double p = out.squared_norm();
      if (prob * p < kPruneThreshold) continue;
      Record next = record;
      next.emplace_back(m.record_key, label);
      const std::size_t child = visit(out.normalized(), step + 1, prob * p, std::move(next));
      tree_.nodes[id].outs.push_back({label, p, child});
    }
    return id;
  }

  const std::vector<Step>& steps_;
  BranchTree tree_;
};

BranchTree build_tree(const SpaceSpec& space, const StateVector& initial, const std::vector<Stage>& stages) {
  return TreeBuilder(lower(space, stages)).build(initial);
}

OutcomeDistribution to_distribution(BranchTree tree) {
  OutcomeDistribution d;
  d.branches = std::move(tree.leaves);
  return d;
}

std::map<std::string, std::string> as_map(const Record& r) { return {r.begin(), r.end()}; }

}  // namespace

std::string format_record(const Record& record, char sep) {
  std::string out;
  for (const auto& [k, v] : record) {
    if (!out.empty()) out += sep;
    out += k + "=" + v;
  }
  return out;
}

Pipeline::Pipeline(SpaceSpec space, StateVector initial, std::vector<Stage> stages)
    : space_(std::move(space)), initial_(std::move(initial)), stages_(std::move(stages)) {
  if (!(initial_.space() == space_)) throw InvalidPipeline("initial state is not over the pipeline space");
  if (!initial_.is_normalized()) throw InvalidPipeline("initial state is not normalized");
  if (stages_.empty() || !std::holds_alternative<DetectStage>(stages_.back()))
    throw InvalidPipeline("detect required as final stage");

  for (std::size_t i = 0; i < stages_.size(); ++i) {
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, UnitaryStage>) {
            if (!s.op.is_unitary()) throw InvalidPipeline("unitary stage '" + s.name + "' is not unitary");
            check_targets(space_, s.targets, s.op.space(), "unitary stage");
          } else if constexpr (std::is_same_v<T, ProjectiveMeasureStage>) {
            if (!space_.contains(s.subsystem))
              throw InvalidPipeline("measurement on unknown subsystem '" + s.subsystem + "'");
            if (s.outcome_labels.size() != space_.subsystem(s.subsystem).dim())
              throw InvalidPipeline("measurement needs one outcome label per basis state");
          } else if constexpr (std::is_same_v<T, GeneralizedMeasureStage>) {
            check_targets(space_, s.targets, s.kraus.k_abs.space(), "generalized measurement");
          } else {
            if (i + 1 != stages_.size()) throw InvalidPipeline("detect must appear exactly once, last");
            if (!space_.contains(subsystems::kDirection))
              throw InvalidPipeline("detect needs a direction subsystem");
          }
        },
        stages_[i]);
  }
}

double OutcomeDistribution::total_probability() const {
  double t = 0.0;
  for (const auto& b : branches) t += b.prob;
  return t;
}

bool RecordPredicate::matches(const Record& record) const {
  for (const auto& term : terms)
    if (std::find(record.begin(), record.end(), term) == record.end()) return false;
  return true;
}

RecordPredicate RecordPredicate::parse(const std::string& text) {
  RecordPredicate pred;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const std::string term = text.substr(start, end - start);
    const std::size_t eq = term.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == term.size())
      throw std::invalid_argument("predicate term '" + term + "' is not key=value");
    pred.terms.emplace_back(term.substr(0, eq), term.substr(eq + 1));
    start = end + 1;
  }
  return pred;
}

OutcomeDistribution run_analytic(const Pipeline& p) {
  return to_distribution(build_tree(p.space(), p.initial(), p.stages()));
}

double marginal(const OutcomeDistribution& d, const RecordPredicate& of) {
  double total = 0.0;
  for (const auto& b : d.branches)
    if (of.matches(b.record)) total += b.prob;
  return total;
}

double conditional(const OutcomeDistribution& d, const RecordPredicate& given, const RecordPredicate& of) {
  double joint = 0.0, norm = 0.0;
  for (const auto& b : d.branches) {
    if (!given.matches(b.record)) continue;
    norm += b.prob;
    if (of.matches(b.record)) joint += b.prob;
  }
  if (!(norm > 0.0)) throw ZeroProbabilityEvent("conditioning event has zero probability");
  return joint / norm;
}

bool distributions_equal(const OutcomeDistribution& a, const OutcomeDistribution& b, double tol) {
  std::map<std::map<std::string, std::string>, std::pair<double, double>> joint;
  for (const auto& br : a.branches) joint[as_map(br.record)].first += br.prob;
  for (const auto& br : b.branches) joint[as_map(br.record)].second += br.prob;
  return std::all_of(joint.begin(), joint.end(),
                     [&](const auto& kv) { return std::abs(kv.second.first - kv.second.second) <= tol; });
}

std::size_t ShotHistogram::count(const RecordPredicate& pred) const {
  std::size_t n = 0;
  for (const auto& [record, c] : counts)
    if (pred.matches(record)) n += c;
  return n;
}

double ShotHistogram::frequency(const RecordPredicate& pred) const {
  return shots == 0 ? 0.0 : static_cast<double>(count(pred)) / static_cast<double>(shots);
}

double ShotHistogram::conditional_frequency(const RecordPredicate& given, const RecordPredicate& of) const {
  std::size_t norm = 0, joint = 0;
  for (const auto& [record, c] : counts) {
    if (!given.matches(record)) continue;
    norm += c;
    if (of.matches(record)) joint += c;
  }
  if (norm == 0) throw ZeroProbabilityEvent("conditioning event was never sampled");
  return static_cast<double>(joint) / static_cast<double>(norm);
}

ShotHistogram run_sampled(const Pipeline& p, std::size_t shots, std::uint64_t seed, unsigned threads) {
  if (shots == 0) throw std::invalid_argument("shots must be at least 1");
  const BranchTree tree = build_tree(p.space(), p.initial(), p.stages());

  auto walk = [&](std::size_t first, std::size_t last, std::vector<std::size_t>& per_leaf) {
    for (std::size_t shot = first; shot < last; ++shot) {
      ShotStream stream(seed, shot);
      std::size_t node = 0;
      while (!tree.nodes[node].leaf) {
        const auto& outs = tree.nodes[node].outs;
        const double u = stream.next();
        double cum = 0.0;
        std::size_t pick = outs.size() - 1;
        for (std::size_t k = 0; k < outs.size(); ++k) {
          cum += outs[k].cond_prob;
          if (u < cum) {
            pick = k;
            break;
          }
        }
        node = outs[pick].child;
      }
      ++per_leaf[*tree.nodes[node].leaf];
    }
  };

  std::size_t workers = threads;
  if (workers == 0) workers = shots < 20000 ? 1 : std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 8);
  workers = std::min(workers, shots);
  std::vector<std::vector<std::size_t>> partial(workers, std::vector<std::size_t>(tree.leaves.size(), 0));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] { walk(shots * w / workers, shots * (w + 1) / workers, partial[w]); });
  }

  ShotHistogram hist{shots, seed, {}};
  for (std::size_t leaf = 0; leaf < tree.leaves.size(); ++leaf) {
    std::size_t c = 0;
    for (const auto& part : partial) c += part[leaf];
    if (c > 0) hist.counts[tree.leaves[leaf].record] += c;
  }
  return hist;
}

double visibility(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("visibility of an empty series");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double sum = *hi + *lo;
  return sum == 0.0 ? 0.0 : (*hi - *lo) / sum;
}

SweepResult sweep(const std::string& parameter, const std::function<Pipeline(double)>& make,
                  std::span<const double> grid, const std::optional<RecordPredicate>& given) {
  if (grid.empty()) throw std::invalid_argument("sweep grid is empty");
  for (double v : grid)
    if (!std::isfinite(v)) throw std::invalid_argument("sweep grid values must be finite");

  SweepResult result{parameter, {grid.begin(), grid.end()}, {}, 0.0};
  std::vector<double> series;
  for (double v : grid) {
    const OutcomeDistribution d = run_analytic(make(v));
    SweepPoint pt{v, marginal(d, RecordPredicate::detector("X")), marginal(d, RecordPredicate::detector("Y")),
                  std::nullopt, std::nullopt};
    if (given) {
      pt.cond_x = conditional(d, *given, RecordPredicate::detector("X"));
      pt.cond_y = conditional(d, *given, RecordPredicate::detector("Y"));
    }
    series.push_back(given ? *pt.cond_x : pt.prob_x);
    result.points.push_back(pt);
  }
  result.visibility = visibility(series);
  return result;
}

bool delayed_choice_equivalence(const Pipeline& p, double tol) {
  const auto& stages = p.stages();
  const std::vector<std::string> eraser_targets{subsystems::kPhoton, subsystems::kEraser};
  auto it = std::find_if(stages.begin(), stages.end(), [&](const Stage& s) {
    const auto* g = std::get_if<GeneralizedMeasureStage>(&s);
    return g != nullptr && same_set(g->targets, eraser_targets);
  });
  if (it == stages.end())
    throw std::invalid_argument("delayed choice needs a photon/eraser measurement before detect");

  std::vector<Stage> moved;
  for (auto s = stages.begin(); s != stages.end(); ++s)
    if (s != it) moved.push_back(*s);
  moved.push_back(*it);

  const auto original = run_analytic(p);
  const auto delayed = to_distribution(build_tree(p.space(), p.initial(), moved));
  return distributions_equal(original, delayed, tol);
}

}  // namespace mzx

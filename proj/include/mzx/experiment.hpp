#pragma once

// Pipelines of unitary and measurement stages, their exact branch tree,
// conditional statistics, seeded shot sampling, and phase sweeps.

#include "mzx/components.hpp"
#include "mzx/hilbert.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace mzx {

/// Branches with probability below this are dropped and never renormalized.
inline constexpr double kPruneThreshold = 1e-14;

namespace records {
inline const std::string kWhichWay = "ww";
inline const std::string kAbsorbed = "abs";
inline const std::string kDetector = "detector";
}  // namespace records

/// Measurement outcomes as (key, label) pairs in stage order.
using Record = std::vector<std::pair<std::string, std::string>>;

/// "k1=v1<sep>k2=v2".
std::string format_record(const Record& record, char sep = ',');

struct UnitaryStage {
  LinearMap op;
  std::vector<std::string> targets;
  std::string name;
};

/// Projective measurement in the basis of one subsystem; outcome i is
/// reported as outcome_labels[i].
struct ProjectiveMeasureStage {
  std::string subsystem;
  std::string record_key;
  std::vector<std::string> outcome_labels;
};

/// Absorption measurement; reports "yes" for K_abs and "no" for K_noabs.
struct GeneralizedMeasureStage {
  EraserKrausPair kraus;
  std::vector<std::string> targets;
  std::string record_key = records::kAbsorbed;
};

/// Final detectors D_X / D_Y on the direction subsystem.
struct DetectStage {
  std::string record_key = records::kDetector;
};

using Stage = std::variant<UnitaryStage, ProjectiveMeasureStage, GeneralizedMeasureStage, DetectStage>;

class InvalidPipeline : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Pipeline {
 public:
  /// Throws InvalidPipeline unless the initial state is normalized, every
  /// stage fits the space, and exactly one DetectStage comes last.
  Pipeline(SpaceSpec space, StateVector initial, std::vector<Stage> stages);

  const SpaceSpec& space() const { return space_; }
  const StateVector& initial() const { return initial_; }
  const std::vector<Stage>& stages() const { return stages_; }

 private:
  SpaceSpec space_;
  StateVector initial_;
  std::vector<Stage> stages_;
};

struct Branch {
  Record record;
  double prob;
  StateVector state;  // normalized
};

struct OutcomeDistribution {
  std::vector<Branch> branches;
  double prune_threshold = kPruneThreshold;

  double total_probability() const;
};

/// Conjunction of key=label terms; the empty predicate is always true.
struct RecordPredicate {
  std::vector<std::pair<std::string, std::string>> terms;

  bool matches(const Record& record) const;

  /// Parses "k=v" or "k1=v1,k2=v2". Throws std::invalid_argument.
  static RecordPredicate parse(const std::string& text);

  static RecordPredicate detector(const std::string& label) { return {{{records::kDetector, label}}}; }
};

class ZeroProbabilityEvent : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

OutcomeDistribution run_analytic(const Pipeline& p);

double marginal(const OutcomeDistribution& d, const RecordPredicate& of);

/// Prob{of | given}. Throws ZeroProbabilityEvent if Prob{given} is zero.
double conditional(const OutcomeDistribution& d, const RecordPredicate& given, const RecordPredicate& of);

/// Joint records and probabilities agree within `tol` (records compared as
/// key -> label maps, so stage order does not matter).
bool distributions_equal(const OutcomeDistribution& a, const OutcomeDistribution& b, double tol);

struct ShotHistogram {
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  std::map<Record, std::size_t> counts;

  std::size_t count(const RecordPredicate& pred) const;
  double frequency(const RecordPredicate& pred) const;
  /// Throws ZeroProbabilityEvent if no shot satisfies `given`.
  double conditional_frequency(const RecordPredicate& given, const RecordPredicate& of) const;
};

/// Seeded shot sampling. Shot k draws its outcomes from ShotStream(seed, k),
/// so the histogram does not depend on the order or threading of shots.
/// `threads` = 0 picks a worker count from the hardware.
ShotHistogram run_sampled(const Pipeline& p, std::size_t shots, std::uint64_t seed, unsigned threads = 0);

struct SweepPoint {
  double value;
  double prob_x;
  double prob_y;
  std::optional<double> cond_x;
  std::optional<double> cond_y;
};

struct SweepResult {
  std::string parameter;
  std::vector<double> grid;
  std::vector<SweepPoint> points;
  double visibility;
};

/// (max - min) / (max + min), or 0 when both are zero.
double visibility(std::span<const double> values);

/// Runs `make(value)` analytically at each grid value. Visibility is taken
/// over Prob{X}, or over Prob{X | given} when `given` is set.
SweepResult sweep(const std::string& parameter, const std::function<Pipeline(double)>& make,
                  std::span<const double> grid, const std::optional<RecordPredicate>& given = {});

/// Whether moving the photon⊗eraser measurement to after the final detection
/// leaves the joint outcome distribution unchanged. Throws
/// std::invalid_argument when there is no such stage before the DetectStage.
bool delayed_choice_equivalence(const Pipeline& p, double tol = kProbabilityTol);

}  // namespace mzx

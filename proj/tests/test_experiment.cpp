#include "mzx/experiment.hpp"
#include "oracles.hpp"
#include "pipelines.hpp"

#include <doctest.h>

#include <numbers>
#include <random>

using namespace mzx;
using namespace fixtures;

namespace {

const RecordPredicate kTrue{};

double prob_of(const OutcomeDistribution& d, const Record& r) {
  for (const auto& b : d.branches)
    if (b.record == r) return b.prob;
  return 0.0;
}

Pipeline with_initial(const Pipeline& p, const StateVector& initial) {
  return Pipeline(p.space(), initial, p.stages());
}

std::vector<double> uniform_grid(int n) {
  std::vector<double> g;
  for (int k = 0; k < n; ++k) g.push_back(2.0 * std::numbers::pi * k / n);
  return g;
}

// Random valid pipeline over the four-subsystem space.
Pipeline random_pipeline(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 5);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi), eta(0.05, 1.0);
  std::vector<Stage> stages;
  const int n = std::uniform_int_distribution<int>(1, 8)(rng);
  for (int i = 0; i < n; ++i) {
    switch (pick(rng)) {
      case 0: stages.push_back(bs()); break;
      case 1: stages.push_back(mirrors()); break;
      case 2: stages.push_back(phase(angle(rng))); break;
      case 3: stages.push_back(readout()); break;
      case 4: stages.push_back(entangler()); break;
      default: stages.push_back(eraser(eta(rng))); break;
    }
  }
  stages.push_back(DetectStage{});
  const auto space = eraser_space();
  return Pipeline(space, oracle::to_state(space, oracle::random_state(24, rng)), stages);
}

}  // namespace

TEST_CASE("baseline interferometer: all weight on X") {
  const auto d = run_analytic(baseline());
  REQUIRE(d.branches.size() == 1);
  CHECK(d.branches[0].record == Record{{"detector", "X"}});
  CHECK(std::abs(d.branches[0].prob - 1.0) <= 1e-12);
  CHECK(marginal(d, det("Y")) == 0.0);
  CHECK(d.prune_threshold == kPruneThreshold);
}

TEST_CASE("entangler pipeline: classical one half") {
  const auto d = run_analytic(entangled());
  CHECK(std::abs(marginal(d, det("X")) - 0.5) <= 1e-12);
  CHECK(std::abs(marginal(d, det("Y")) - 0.5) <= 1e-12);
}

TEST_CASE("which-way readout pipeline branches 4 x 1/4") {
  const auto d = run_analytic(with_readout());
  REQUIRE(d.branches.size() == 4);
  for (const auto& b : d.branches) CHECK(std::abs(b.prob - 0.25) <= 1e-12);
  CHECK(std::abs(conditional(d, {{{"ww", "A"}}}, det("X")) - 0.5) <= 1e-12);
  CHECK(std::abs(conditional(d, {{{"ww", "B"}}}, det("X")) - 0.5) <= 1e-12);
}

TEST_CASE("eraser pipeline at eta = 1: two surviving branches") {
  const auto d = run_analytic(erased());
  REQUIRE(d.branches.size() == 2);
  CHECK(std::abs(prob_of(d, {{"abs", "yes"}, {"detector", "X"}}) - 0.5) <= 1e-12);
  CHECK(std::abs(prob_of(d, {{"abs", "no"}, {"detector", "Y"}}) - 0.5) <= 1e-12);
  CHECK(prob_of(d, {{"abs", "yes"}, {"detector", "Y"}}) == 0.0);
  CHECK(prob_of(d, {{"abs", "no"}, {"detector", "X"}}) == 0.0);

  const auto& absorbed = d.branches[0];
  const auto erased_state = StateVector::basis(eraser_space(), {"x", "vac", "g", "epsilon"}).scaled(-1.0);
  CHECK(max_entry_distance(absorbed.state, erased_state) <= 1e-12);
  for (const auto& b : d.branches) CHECK(b.state.is_normalized());
}

TEST_CASE("conditional probabilities") {
  const auto d = run_analytic(erased());
  CHECK(std::abs(conditional(d, abs_yes(), det("X")) - 1.0) <= 1e-12);
  CHECK(std::abs(conditional(d, abs_yes(), det("Y"))) <= 1e-12);
  CHECK(std::abs(conditional(d, abs_no(), det("Y")) - 1.0) <= 1e-12);
  CHECK(std::abs(conditional(d, kTrue, det("X")) - 0.5) <= 1e-12);

  const auto base = run_analytic(baseline());
  CHECK_THROWS_AS(conditional(base, abs_yes(), det("X")), ZeroProbabilityEvent);
  CHECK_THROWS_AS(conditional(base, det("Y"), det("X")), ZeroProbabilityEvent);
}

TEST_CASE("marginals: no-signalling between open and closed channel") {
  CHECK(marginal(run_analytic(erased()), kTrue) == doctest::Approx(1.0).epsilon(1e-12));
  for (double eta : {0.1, 0.5, 1.0}) {
    const double open = marginal(run_analytic(erased(eta, true)), det("X"));
    const double closed = marginal(run_analytic(erased(eta, false)), det("X"));
    CHECK(std::abs(open - 0.5) <= 1e-12);
    CHECK(std::abs(closed - 0.5) <= 1e-12);
    CHECK(std::abs(open - closed) <= 1e-12);
    CHECK(std::abs(marginal(run_analytic(erased(eta)), abs_yes()) - eta / 2.0) <= 1e-12);
  }
}

TEST_CASE("probabilities sum to one for random pipelines") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const auto d = run_analytic(random_pipeline(rng));
    CHECK(std::abs(d.total_probability() - 1.0) <= 1e-10);
    for (const auto& b : d.branches) {
      CHECK(b.prob >= kPruneThreshold);
      CHECK(b.state.is_normalized());
    }
  }
}

TEST_CASE("global phase of the input never changes a branch probability") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> theta(0.0, 2.0 * std::numbers::pi);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_pipeline(rng);
    const auto shifted = with_initial(p, p.initial().scaled(std::polar(1.0, theta(rng))));
    CHECK(distributions_equal(run_analytic(p), run_analytic(shifted), 1e-12));
  }
}

TEST_CASE("swapping adjacent unitaries on disjoint subsystems is invisible") {
  std::mt19937_64 rng(5);
  const auto space = eraser_space();
  const SpaceSpec atom{atom_subsystem()};
  for (int trial = 0; trial < 50; ++trial) {
    const Stage atom_kick = UnitaryStage{oracle::to_map(atom, oracle::random_unitary(2, rng), true), {"atom"}, "kick"};
    const Stage dir = phase(std::uniform_real_distribution<double>(0, 6.28)(rng));
    const auto initial = oracle::to_state(space, oracle::random_state(24, rng));
    const Pipeline ab(space, initial, {bs(), entangler(), atom_kick, dir, mirrors(), bs(), eraser(0.7), DetectStage{}});
    const Pipeline ba(space, initial, {bs(), entangler(), dir, atom_kick, mirrors(), bs(), eraser(0.7), DetectStage{}});
    CHECK(distributions_equal(run_analytic(ab), run_analytic(ba), 1e-12));
  }
}

TEST_CASE("marginal equals the conditional decomposition over a partition") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = run_analytic(random_pipeline(rng));
    for (const auto* key : {"abs", "ww"}) {
      const std::vector<RecordPredicate> parts =
          std::string(key) == "abs" ? std::vector<RecordPredicate>{abs_yes(), abs_no()}
                                    : std::vector<RecordPredicate>{{{{"ww", "A"}}}, {{{"ww", "B"}}}};
      double covered = 0.0;
      for (const auto& g : parts) covered += marginal(d, g);
      if (std::abs(covered - 1.0) > 1e-10) continue;  // key not measured in this pipeline
      for (const char* out : {"X", "Y"}) {
        double sum = 0.0;
        for (const auto& g : parts) {
          const double pg = marginal(d, g);
          if (pg > 0.0) sum += conditional(d, g, det(out)) * pg;
        }
        CHECK(std::abs(sum - marginal(d, det(out))) <= 1e-12);
      }
    }
  }
}

TEST_CASE("pipeline validation") {
  const auto space = direction_space();
  const auto x = StateVector::basis(space, {"x"});
  CHECK_THROWS_AS(Pipeline(space, x, {bs(), mirrors()}), InvalidPipeline);
  CHECK_THROWS_AS(Pipeline(space, x, {}), InvalidPipeline);
  CHECK_THROWS_AS(Pipeline(space, x, {DetectStage{}, bs(), DetectStage{}}), InvalidPipeline);
  CHECK_THROWS_AS(Pipeline(space, x.scaled(2.0), {DetectStage{}}), InvalidPipeline);
  CHECK_THROWS_AS(Pipeline(space, x, {entangler(), DetectStage{}}), InvalidPipeline);
  CHECK_THROWS_AS(Pipeline(space, x, {eraser(1.0), DetectStage{}}), InvalidPipeline);
  CHECK_THROWS_AS(Pipeline(space, x, {ProjectiveMeasureStage{"photon", "ww", {"A", "B"}}, DetectStage{}}),
                  InvalidPipeline);
  CHECK_THROWS_AS(Pipeline(space, x, {ProjectiveMeasureStage{"direction", "ww", {"A"}}, DetectStage{}}),
                  InvalidPipeline);
  const LinearMap half(space, AmplitudeMatrix<double>::Identity(2, 2) * 0.5, false);
  CHECK_THROWS_AS(Pipeline(space, x, {UnitaryStage{half, kDir, "half"}, DetectStage{}}), InvalidPipeline);
  CHECK_THROWS_AS(Pipeline(eraser_space(), x, {DetectStage{}}), InvalidPipeline);
  const SpaceSpec no_direction{atom_subsystem()};
  CHECK_THROWS_AS(Pipeline(no_direction, StateVector::basis(no_direction, {"e"}), {DetectStage{}}), InvalidPipeline);
}

TEST_CASE("record predicates") {
  const auto p = RecordPredicate::parse("abs=yes,detector=X");
  REQUIRE(p.terms.size() == 2);
  CHECK(p.matches({{"abs", "yes"}, {"detector", "X"}}));
  CHECK_FALSE(p.matches({{"abs", "yes"}}));
  CHECK(kTrue.matches({}));
  CHECK_THROWS_AS(RecordPredicate::parse("abs"), std::invalid_argument);
  CHECK_THROWS_AS(RecordPredicate::parse("abs=yes,"), std::invalid_argument);
  CHECK_THROWS_AS(RecordPredicate::parse("=X"), std::invalid_argument);
  CHECK(format_record({{"ww", "A"}, {"detector", "Y"}}) == "ww=A,detector=Y");
}

TEST_CASE("sampling the baseline lands every shot in X") {
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    const auto h = run_sampled(baseline(), 1000, seed);
    CHECK(h.shots == 1000);
    CHECK(h.seed == seed);
    CHECK(h.count(det("X")) == 1000);
  }
  CHECK_THROWS_AS(run_sampled(baseline(), 0, 1), std::invalid_argument);
}

TEST_CASE("sampling is reproducible and independent of threading") {
  const auto one = run_sampled(with_readout(), 1, 7);
  CHECK(one.counts == run_sampled(with_readout(), 1, 7).counts);

  const auto p = erased(0.6);
  const auto serial = run_sampled(p, 30000, 2024, 1);
  for (unsigned t : {2u, 3u, 8u, 0u}) CHECK(run_sampled(p, 30000, 2024, t).counts == serial.counts);
  CHECK(run_sampled(p, 30000, 2025, 1).counts != serial.counts);

  std::size_t total = 0;
  for (const auto& [r, c] : serial.counts) total += c;
  CHECK(total == 30000);
}

TEST_CASE("entangler sampling stays within the binomial 5-sigma band") {
  const auto h = run_sampled(entangled(), 100000, 7);
  CHECK(std::abs(h.frequency(det("X")) - 0.5) <= 5.0 * std::sqrt(0.25 / 1e5));
}

TEST_CASE("sampled frequencies converge to the analytic branches") {
  constexpr std::size_t kShots = 100000;
  for (const auto& p : {with_readout(), erased(0.5), erased(1.0, true, 1.1)}) {
    const auto exact = run_analytic(p);
    int excursions = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto h = run_sampled(p, kShots, seed);
      for (const auto& b : exact.branches) {
        const auto it = h.counts.find(b.record);
        const double freq = it == h.counts.end() ? 0.0 : double(it->second) / kShots;
        if (std::abs(freq - b.prob) > 5.0 * std::sqrt(b.prob * (1.0 - b.prob) / kShots)) ++excursions;
      }
    }
    CHECK(excursions <= 1);
  }
}

TEST_CASE("sampled conditionals") {
  const auto h = run_sampled(erased(), 20000, 3);
  CHECK(h.conditional_frequency(abs_yes(), det("X")) == 1.0);
  CHECK(h.conditional_frequency(abs_no(), det("Y")) == 1.0);
  CHECK_THROWS_AS(run_sampled(baseline(), 100, 3).conditional_frequency(abs_yes(), det("X")), ZeroProbabilityEvent);
}

TEST_CASE("visibility") {
  CHECK(visibility(std::vector<double>{1.0, 0.0}) == 1.0);
  CHECK(visibility(std::vector<double>{0.5, 0.5}) == 0.0);
  CHECK(visibility(std::vector<double>{0.0, 0.0}) == 0.0);
  CHECK(visibility(std::vector<double>{0.75, 0.25}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(visibility(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("phase sweeps: fringes, no fringes, restored fringes") {
  const auto grid = uniform_grid(64);

  const auto base = sweep("phi", [](double phi) { return baseline(phi); }, grid);
  CHECK(std::abs(base.visibility - 1.0) <= 1e-10);
  for (const auto& pt : base.points) CHECK(std::abs(pt.prob_x - oracle::mzi_prob_x(pt.value)) <= 1e-12);

  const auto ent = sweep("phi", [](double phi) { return entangled(phi); }, grid);
  CHECK(std::abs(ent.visibility) <= 1e-10);
  for (const auto& pt : ent.points) CHECK(std::abs(pt.prob_x - 0.5) <= 1e-12);

  const auto era = sweep("phi", [](double phi) { return erased(1.0, true, phi); }, grid, abs_yes());
  CHECK(std::abs(era.visibility - 1.0) <= 1e-10);
  for (const auto& pt : era.points) {
    CHECK(std::abs(*pt.cond_x - oracle::mzi_prob_x(pt.value)) <= 1e-12);
    CHECK(std::abs(pt.prob_x - 0.5) <= 1e-12);
  }

  CHECK(base.grid.size() == 64);
  CHECK(base.visibility <= 1.0 + 1e-12);
}

TEST_CASE("sweep argument errors") {
  auto make = [](double phi) { return baseline(phi); };
  CHECK_THROWS_AS(sweep("phi", make, std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(sweep("phi", make, std::vector<double>{0.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(sweep("phi", make, std::vector<double>{0.0}, abs_yes()), ZeroProbabilityEvent);
}

TEST_CASE("delayed choice: eraser position does not matter") {
  CHECK(delayed_choice_equivalence(erased()));
  CHECK(delayed_choice_equivalence(erased(1.0, true, std::nullopt, true)));
  for (double eta : {0.1, 0.5}) CHECK(delayed_choice_equivalence(erased(eta, true, 0.8, true)));
  CHECK(distributions_equal(run_analytic(erased()), run_analytic(erased(1.0, true, std::nullopt, true)), 1e-12));

  CHECK_THROWS_AS(delayed_choice_equivalence(entangled()), std::invalid_argument);
  CHECK_THROWS_AS(delayed_choice_equivalence(erased(1.0, false)), std::invalid_argument);
}

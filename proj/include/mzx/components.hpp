#pragma once

// Optical and atomic elements of the interferometer as linear maps.
//
// Path convention: between the first beam splitter and the mirrors, path A is
// direction label x and path B is direction label y.

#include "mzx/hilbert.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace mzx {

namespace subsystems {
inline const std::string kDirection = "direction";
inline const std::string kPhoton = "photon";
inline const std::string kAtom = "atom";
inline const std::string kEraser = "eraser";
}  // namespace subsystems

inline Subsystem direction_subsystem() { return {subsystems::kDirection, {"x", "y"}}; }
inline Subsystem photon_subsystem() { return {subsystems::kPhoton, {"vac", "A", "B"}}; }
inline Subsystem atom_subsystem() { return {subsystems::kAtom, {"e", "g"}}; }
inline Subsystem eraser_subsystem() { return {subsystems::kEraser, {"gamma", "epsilon"}}; }

enum class Path { A, B };

inline const char* path_name(Path p) { return p == Path::A ? "A" : "B"; }
inline std::string direction_label(Path p) { return p == Path::A ? "x" : "y"; }

/// Whether the eraser channel c is open. A closed channel means no eraser stage.
struct ChannelState {
  bool open = false;
};

/// (|x> + i|y>)/√2 and (|y> + i|x>)/√2.
template <typename Scalar = double>
BasicLinearMap<Scalar> beam_splitter() {
  using C = Amplitude<Scalar>;
  const Scalar r = Scalar(1) / std::sqrt(Scalar(2));
  AmplitudeMatrix<Scalar> m(2, 2);
  m << C(r, 0), C(0, r),
       C(0, r), C(r, 0);
  return BasicLinearMap<Scalar>(SpaceSpec{direction_subsystem()}, std::move(m), true);
}

/// Both mirrors together: |x> -> i|y>, |y> -> i|x>.
template <typename Scalar = double>
BasicLinearMap<Scalar> mirror_pair() {
  using C = Amplitude<Scalar>;
  AmplitudeMatrix<Scalar> m(2, 2);
  m << C(0), C(0, 1),
       C(0, 1), C(0);
  return BasicLinearMap<Scalar>(SpaceSpec{direction_subsystem()}, std::move(m), true);
}

/// Multiplies the amplitude on `path` by e^{i phi}.
template <typename Scalar = double>
BasicLinearMap<Scalar> phase_shifter(Scalar phi, Path path) {
  if (!std::isfinite(static_cast<double>(phi))) throw std::invalid_argument("phase must be finite");
  const auto n = static_cast<Eigen::Index>(2);
  AmplitudeMatrix<Scalar> m = AmplitudeMatrix<Scalar>::Identity(n, n);
  const Eigen::Index k = path == Path::A ? 0 : 1;
  m(k, k) = std::polar(Scalar(1), phi);
  return BasicLinearMap<Scalar>(SpaceSpec{direction_subsystem()}, std::move(m), true);
}

/// Emitter atom on direction⊗photon⊗atom: |x,vac,e> <-> |x,A,g> and
/// |y,vac,e> <-> |y,B,g>, identity on every other basis state.
template <typename Scalar = double>
BasicLinearMap<Scalar> which_way_entangler() {
  const SpaceSpec space{direction_subsystem(), photon_subsystem(), atom_subsystem()};
  const auto n = static_cast<Eigen::Index>(space.total_dim());
  AmplitudeMatrix<Scalar> m = AmplitudeMatrix<Scalar>::Identity(n, n);
  auto swap = [&](const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const auto i = static_cast<Eigen::Index>(space.basis_index(a));
    const auto j = static_cast<Eigen::Index>(space.basis_index(b));
    m(i, i) = m(j, j) = Amplitude<Scalar>(0);
    m(i, j) = m(j, i) = Amplitude<Scalar>(1);
  };
  swap({"x", "vac", "e"}, {"x", "A", "g"});
  swap({"y", "vac", "e"}, {"y", "B", "g"});
  return BasicLinearMap<Scalar>(space, std::move(m), true);
}

template <typename Scalar = double>
struct ReadoutResult {
  Path outcome;
  BasicStateVector<Scalar> collapsed;
  Scalar prob;
};

/// Projective which-way measurement on the direction subsystem. Picks A when
/// `rng_draw` < Prob(A).
template <typename Scalar>
ReadoutResult<Scalar> which_way_readout(const BasicStateVector<Scalar>& psi, double rng_draw) {
  if (!psi.space().contains(subsystems::kDirection))
    throw std::invalid_argument("which-way readout needs a direction subsystem");
  if (!psi.is_normalized()) throw std::invalid_argument("which-way readout needs a normalized state");
  if (!(rng_draw >= 0.0 && rng_draw < 1.0)) throw std::invalid_argument("rng draw must lie in [0,1)");

  const auto branch = [&](Path p) {
    return apply(projector<Scalar>(psi.space(), subsystems::kDirection, direction_label(p)), psi);
  };
  auto a = branch(Path::A);
  const Scalar prob_a = a.squared_norm();
  const Path outcome = rng_draw < static_cast<double>(prob_a) ? Path::A : Path::B;
  auto chosen = outcome == Path::A ? std::move(a) : branch(Path::B);
  const Scalar prob = chosen.squared_norm();
  if (!(prob > Scalar(0))) throw std::logic_error("which-way readout drew a zero-probability branch");
  return {outcome, chosen.normalized(), prob};
}

enum class EraserMode {
  /// couples (|A> + |B>)/√2; reproduces the erased state -|x,vac,g,epsilon>
  Symmetric,
  /// couples (|A> - |B>)/√2
  Antisymmetric,
};

/// Two-outcome absorption measurement on photon⊗eraser.
template <typename Scalar = double>
struct BasicEraserKrausPair {
  BasicLinearMap<Scalar> k_abs;
  BasicLinearMap<Scalar> k_noabs;
  Scalar eta;

  /// max|K_abs†K_abs + K_noabs†K_noabs - I|
  double completeness_error() const {
    const auto& a = k_abs.matrix();
    const auto& b = k_noabs.matrix();
    const auto n = a.rows();
    return detail::max_abs_entry(a.adjoint() * a + b.adjoint() * b -
                                 AmplitudeMatrix<Scalar>::Identity(n, n));
  }
};

using EraserKrausPair = BasicEraserKrausPair<double>;

/// K_abs = √η |vac,ε><s,γ| and K_noabs = I - (1 - √(1-η)) |s,γ><s,γ|, where s
/// is the coupled photon mode. η is the absorption probability of a photon in
/// mode s; it is a model parameter, not a measured cross-section.
template <typename Scalar = double>
BasicEraserKrausPair<Scalar> eraser_kraus(Scalar eta, EraserMode mode = EraserMode::Symmetric) {
  if (!(eta > Scalar(0) && eta <= Scalar(1))) throw std::invalid_argument("eta must lie in (0, 1]");
  const SpaceSpec space{photon_subsystem(), eraser_subsystem()};
  const auto n = static_cast<Eigen::Index>(space.total_dim());
  const Scalar r = Scalar(1) / std::sqrt(Scalar(2));
  const Scalar sign = mode == EraserMode::Symmetric ? Scalar(1) : Scalar(-1);

  AmplitudeVector<Scalar> s_gamma = AmplitudeVector<Scalar>::Zero(n);
  s_gamma(static_cast<Eigen::Index>(space.basis_index({"A", "gamma"}))) = r;
  s_gamma(static_cast<Eigen::Index>(space.basis_index({"B", "gamma"}))) = sign * r;
  AmplitudeVector<Scalar> vac_eps = AmplitudeVector<Scalar>::Zero(n);
  vac_eps(static_cast<Eigen::Index>(space.basis_index({"vac", "epsilon"}))) = Scalar(1);

  AmplitudeMatrix<Scalar> abs = std::sqrt(eta) * (vac_eps * s_gamma.adjoint());
  const Scalar shrink = Scalar(1) - std::sqrt(Scalar(1) - eta);
  AmplitudeMatrix<Scalar> noabs =
      AmplitudeMatrix<Scalar>::Identity(n, n) - shrink * (s_gamma * s_gamma.adjoint());

  BasicEraserKrausPair<Scalar> pair{BasicLinearMap<Scalar>(space, std::move(abs), false),
                                    BasicLinearMap<Scalar>(space, std::move(noabs), false), eta};
  if (pair.completeness_error() > kUnitarityTol)
    throw std::logic_error("eraser Kraus pair is not complete");
  return pair;
}

/// Final detector projectors (P_X, P_Y) embedded in `space`.
template <typename Scalar = double>
std::pair<BasicLinearMap<Scalar>, BasicLinearMap<Scalar>> detector_projectors(const SpaceSpec& space) {
  if (!space.contains(subsystems::kDirection))
    throw std::invalid_argument("detector projectors need a direction subsystem");
  return {projector<Scalar>(space, subsystems::kDirection, "x"),
          projector<Scalar>(space, subsystems::kDirection, "y")};
}

}  // namespace mzx

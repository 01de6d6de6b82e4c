#pragma once

// Dense state vectors and linear maps over a small tensor-product space.
//
// Basis ordering: the amplitude index is a mixed-radix number over the
// subsystems in SpaceSpec order, last subsystem varying fastest.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mzx {

inline constexpr double kUnitarityTol = 1e-10;
inline constexpr double kNormTol = 1e-10;
inline constexpr double kProbabilityTol = 1e-12;
inline constexpr double kGlobalPhaseTol = 1e-10;
inline constexpr std::size_t kMaxDim = 1'000'000;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One tensor factor: a name and its ordered basis labels.
struct Subsystem {
  std::string name;
  std::vector<std::string> labels;

  std::size_t dim() const { return labels.size(); }

  std::size_t index_of(const std::string& label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end())
      throw std::invalid_argument("unknown label '" + label + "' in subsystem '" + name + "'");
    return static_cast<std::size_t>(it - labels.begin());
  }

  friend bool operator==(const Subsystem&, const Subsystem&) = default;
};

class SpaceSpec {
 public:
  SpaceSpec() = default;

  explicit SpaceSpec(std::vector<Subsystem> subsystems) : subsystems_(std::move(subsystems)) {
    total_dim_ = 1;
    for (std::size_t i = 0; i < subsystems_.size(); ++i) {
      const auto& s = subsystems_[i];
      if (s.dim() < 2)
        throw std::invalid_argument("subsystem '" + s.name + "' needs at least two labels");
      for (std::size_t a = 0; a < s.labels.size(); ++a)
        for (std::size_t b = a + 1; b < s.labels.size(); ++b)
          if (s.labels[a] == s.labels[b])
            throw std::invalid_argument("duplicate label '" + s.labels[a] + "' in '" + s.name + "'");
      for (std::size_t j = 0; j < i; ++j)
        if (subsystems_[j].name == s.name)
          throw std::invalid_argument("duplicate subsystem name '" + s.name + "'");
      if (total_dim_ > kMaxDim / s.dim())
        throw DimensionError("total dimension exceeds " + std::to_string(kMaxDim));
      total_dim_ *= s.dim();
    }
  }

  SpaceSpec(std::initializer_list<Subsystem> subsystems)
      : SpaceSpec(std::vector<Subsystem>(subsystems)) {}

  const std::vector<Subsystem>& subsystems() const { return subsystems_; }
  std::size_t size() const { return subsystems_.size(); }
  std::size_t total_dim() const { return total_dim_; }

  bool contains(const std::string& name) const {
    return std::any_of(subsystems_.begin(), subsystems_.end(),
                       [&](const Subsystem& s) { return s.name == name; });
  }

  std::size_t position_of(const std::string& name) const {
    for (std::size_t i = 0; i < subsystems_.size(); ++i)
      if (subsystems_[i].name == name) return i;
    throw std::invalid_argument("unknown subsystem '" + name + "'");
  }

  const Subsystem& subsystem(const std::string& name) const {
    return subsystems_[position_of(name)];
  }

  /// Stride of subsystem at `pos` in the flat index.
  std::size_t stride(std::size_t pos) const {
    std::size_t s = 1;
    for (std::size_t i = pos + 1; i < subsystems_.size(); ++i) s *= subsystems_[i].dim();
    return s;
  }

  std::size_t basis_index(const std::vector<std::string>& labels) const {
    if (labels.size() != subsystems_.size())
      throw std::invalid_argument("label tuple length does not match the space");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < subsystems_.size(); ++i)
      idx = idx * subsystems_[i].dim() + subsystems_[i].index_of(labels[i]);
    return idx;
  }

  std::vector<std::size_t> digits(std::size_t index) const {
    std::vector<std::size_t> d(subsystems_.size());
    for (std::size_t i = subsystems_.size(); i-- > 0;) {
      d[i] = index % subsystems_[i].dim();
      index /= subsystems_[i].dim();
    }
    return d;
  }

  std::vector<std::string> labels_of(std::size_t index) const {
    auto d = digits(index);
    std::vector<std::string> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = subsystems_[i].labels[d[i]];
    return out;
  }

  /// Sub-space made of the named subsystems, in the given order.
  SpaceSpec restrict_to(const std::vector<std::string>& names) const {
    std::vector<Subsystem> subs;
    subs.reserve(names.size());
    for (const auto& n : names) subs.push_back(subsystem(n));
    return SpaceSpec(std::move(subs));
  }

  friend bool operator==(const SpaceSpec& a, const SpaceSpec& b) {
    return a.subsystems_ == b.subsystems_;
  }

 private:
  std::vector<Subsystem> subsystems_;
  std::size_t total_dim_ = 1;
};

/// Concatenation of two spaces (left factor first).
inline SpaceSpec tensor(const SpaceSpec& a, const SpaceSpec& b) {
  std::vector<Subsystem> subs = a.subsystems();
  subs.insert(subs.end(), b.subsystems().begin(), b.subsystems().end());
  return SpaceSpec(std::move(subs));
}

template <typename Scalar>
using Amplitude = std::complex<Scalar>;

template <typename Scalar>
using AmplitudeVector = Eigen::Matrix<Amplitude<Scalar>, Eigen::Dynamic, 1>;

template <typename Scalar>
using AmplitudeMatrix = Eigen::Matrix<Amplitude<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.derived().eval().allFinite();
}

template <typename Derived>
double max_abs_entry(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0.0;
  return static_cast<double>(m.derived().eval().cwiseAbs().maxCoeff());
}

inline void require_same_space(const SpaceSpec& a, const SpaceSpec& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": space mismatch");
}

}  // namespace detail

template <typename Scalar>
class BasicStateVector {
 public:
  using Vector = AmplitudeVector<Scalar>;

  BasicStateVector(SpaceSpec space, Vector amps) : space_(std::move(space)), amps_(std::move(amps)) {
    if (static_cast<std::size_t>(amps_.size()) != space_.total_dim())
      throw std::invalid_argument("amplitude count does not match the space dimension");
    if (!detail::all_finite(amps_))
      throw std::invalid_argument("state amplitudes must be finite");
  }

  /// Product basis state |l_0, l_1, ...>.
  static BasicStateVector basis(const SpaceSpec& space, const std::vector<std::string>& labels) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(space.total_dim()));
    v(static_cast<Eigen::Index>(space.basis_index(labels))) = Amplitude<Scalar>(1);
    return BasicStateVector(space, std::move(v));
  }

  const SpaceSpec& space() const { return space_; }
  const Vector& amplitudes() const { return amps_; }
  std::size_t dim() const { return space_.total_dim(); }

  Amplitude<Scalar> operator[](std::size_t i) const { return amps_(static_cast<Eigen::Index>(i)); }
  Amplitude<Scalar> at(const std::vector<std::string>& labels) const {
    return amps_(static_cast<Eigen::Index>(space_.basis_index(labels)));
  }

  Scalar norm() const { return amps_.norm(); }
  Scalar squared_norm() const { return amps_.squaredNorm(); }
  bool is_normalized(double tol = kNormTol) const {
    return std::abs(static_cast<double>(norm()) - 1.0) <= tol;
  }

  BasicStateVector normalized() const {
    const Scalar n = norm();
    if (!(n > Scalar(0))) throw std::domain_error("cannot normalize a zero vector");
    return BasicStateVector(space_, amps_ / n);
  }

  BasicStateVector scaled(Amplitude<Scalar> factor) const {
    return BasicStateVector(space_, amps_ * factor);
  }

  friend BasicStateVector operator+(const BasicStateVector& a, const BasicStateVector& b) {
    detail::require_same_space(a.space_, b.space_, "state sum");
    return BasicStateVector(a.space_, a.amps_ + b.amps_);
  }

 private:
  SpaceSpec space_;
  Vector amps_;
};

template <typename Scalar>
class BasicLinearMap {
 public:
  using Matrix = AmplitudeMatrix<Scalar>;

  /// Throws if a map flagged unitary fails max|M^dagger M - I| <= kUnitarityTol.
  BasicLinearMap(SpaceSpec space, Matrix entries, bool unitary)
      : space_(std::move(space)), entries_(std::move(entries)), unitary_(unitary) {
    const auto n = static_cast<Eigen::Index>(space_.total_dim());
    if (entries_.rows() != n || entries_.cols() != n)
      throw std::invalid_argument("map shape does not match the space dimension");
    if (!detail::all_finite(entries_)) throw std::invalid_argument("map entries must be finite");
    if (unitary_) {
      const double err = unitarity_error();
      if (err > kUnitarityTol)
        throw std::invalid_argument("map flagged unitary deviates by " + std::to_string(err));
    }
  }

  static BasicLinearMap identity(const SpaceSpec& space) {
    const auto n = static_cast<Eigen::Index>(space.total_dim());
    return BasicLinearMap(Unchecked{}, space, Matrix::Identity(n, n), true);
  }

  const SpaceSpec& space() const { return space_; }
  const Matrix& matrix() const { return entries_; }
  bool is_unitary() const { return unitary_; }
  std::size_t dim() const { return space_.total_dim(); }

  Amplitude<Scalar> operator()(std::size_t row, std::size_t col) const {
    return entries_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
  }

  double unitarity_error() const {
    const auto n = entries_.rows();
    return detail::max_abs_entry(entries_.adjoint() * entries_ - Matrix::Identity(n, n));
  }

  BasicLinearMap adjoint() const { return BasicLinearMap(space_, entries_.adjoint(), unitary_); }

  /// Composition: (a * b) applies b first.
  friend BasicLinearMap operator*(const BasicLinearMap& a, const BasicLinearMap& b) {
    detail::require_same_space(a.space_, b.space_, "map product");
    return BasicLinearMap(a.space_, a.entries_ * b.entries_, a.unitary_ && b.unitary_);
  }

 private:
  struct Unchecked {};
  BasicLinearMap(Unchecked, SpaceSpec space, Matrix entries, bool unitary)
      : space_(std::move(space)), entries_(std::move(entries)), unitary_(unitary) {}

  SpaceSpec space_;
  Matrix entries_;
  bool unitary_ = false;
};

using StateVector = BasicStateVector<double>;
using LinearMap = BasicLinearMap<double>;
using Complex = std::complex<double>;

/// Tensor product a ⊗ b on the concatenated space.
template <typename Scalar>
BasicLinearMap<Scalar> kron(const BasicLinearMap<Scalar>& a, const BasicLinearMap<Scalar>& b) {
  if (a.dim() > kMaxDim / b.dim())
    throw DimensionError("kron: total dimension exceeds " + std::to_string(kMaxDim));
  SpaceSpec space = tensor(a.space(), b.space());
  const auto da = static_cast<Eigen::Index>(a.dim());
  const auto db = static_cast<Eigen::Index>(b.dim());
  AmplitudeMatrix<Scalar> out(da * db, da * db);
  for (Eigen::Index i = 0; i < da; ++i)
    for (Eigen::Index j = 0; j < da; ++j)
      out.block(i * db, j * db, db, db) = a.matrix()(i, j) * b.matrix();
  return BasicLinearMap<Scalar>(std::move(space), std::move(out), a.is_unitary() && b.is_unitary());
}

template <typename Scalar>
BasicStateVector<Scalar> kron(const BasicStateVector<Scalar>& a, const BasicStateVector<Scalar>& b) {
  if (a.dim() > kMaxDim / b.dim())
    throw DimensionError("kron: total dimension exceeds " + std::to_string(kMaxDim));
  SpaceSpec space = tensor(a.space(), b.space());
  const auto db = static_cast<Eigen::Index>(b.dim());
  AmplitudeVector<Scalar> out(static_cast<Eigen::Index>(a.dim()) * db);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(a.dim()); ++i)
    out.segment(i * db, db) = a.amplitudes()(i) * b.amplitudes();
  return BasicStateVector<Scalar>(std::move(space), std::move(out));
}

/// Lifts `op` (defined on the `targets` subsystems, in that order) to the full
/// space, acting as the identity on every other subsystem. Targets need not be
/// adjacent or sorted.
template <typename Scalar>
BasicLinearMap<Scalar> embed(const BasicLinearMap<Scalar>& op, const std::vector<std::string>& targets,
                             const SpaceSpec& space) {
  if (targets.empty()) throw std::invalid_argument("embed: no target subsystems");
  std::vector<std::size_t> pos;
  for (const auto& t : targets) {
    const std::size_t p = space.position_of(t);
    if (std::find(pos.begin(), pos.end(), p) != pos.end())
      throw std::invalid_argument("embed: repeated target '" + t + "'");
    pos.push_back(p);
  }
  const SpaceSpec sub = space.restrict_to(targets);
  if (!(sub == op.space())) throw DimensionError("embed: operator space does not match the targets");

  // strides of the targets inside the full index, and their offsets in the operator index
  std::vector<std::size_t> full_stride(pos.size()), sub_dim(pos.size());
  for (std::size_t k = 0; k < pos.size(); ++k) {
    full_stride[k] = space.stride(pos[k]);
    sub_dim[k] = space.subsystems()[pos[k]].dim();
  }

  const std::size_t n = space.total_dim();
  const std::size_t m = op.dim();
  // offset[r]: contribution of sub-index r to the full index
  std::vector<std::size_t> offset(m);
  for (std::size_t r = 0; r < m; ++r) {
    std::size_t rem = r, acc = 0;
    for (std::size_t k = pos.size(); k-- > 0;) {
      acc += (rem % sub_dim[k]) * full_stride[k];
      rem /= sub_dim[k];
    }
    offset[r] = acc;
  }

  AmplitudeMatrix<Scalar> out = AmplitudeMatrix<Scalar>::Zero(static_cast<Eigen::Index>(n),
                                                              static_cast<Eigen::Index>(n));
  for (std::size_t col = 0; col < n; ++col) {
    // split col into (rest, sub-index c)
    std::size_t c = 0, base = col;
    for (std::size_t k = 0; k < pos.size(); ++k) {
      const std::size_t digit = (col / full_stride[k]) % sub_dim[k];
      c = c * sub_dim[k] + digit;
      base -= digit * full_stride[k];
    }
    for (std::size_t r = 0; r < m; ++r) {
      const auto v = op.matrix()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      if (v != Amplitude<Scalar>(0))
        out(static_cast<Eigen::Index>(base + offset[r]), static_cast<Eigen::Index>(col)) = v;
    }
  }
  return BasicLinearMap<Scalar>(space, std::move(out), op.is_unitary());
}

template <typename Scalar>
BasicStateVector<Scalar> apply(const BasicLinearMap<Scalar>& map, const BasicStateVector<Scalar>& psi) {
  detail::require_same_space(map.space(), psi.space(), "apply");
  return BasicStateVector<Scalar>(psi.space(), map.matrix() * psi.amplitudes());
}

/// <a|b>, conjugate-linear in `a`.
template <typename Scalar>
Amplitude<Scalar> inner(const BasicStateVector<Scalar>& a, const BasicStateVector<Scalar>& b) {
  detail::require_same_space(a.space(), b.space(), "inner");
  return a.amplitudes().dot(b.amplitudes());
}

/// Projector onto `label` of `subsystem`, identity on the rest.
template <typename Scalar = double>
BasicLinearMap<Scalar> projector(const SpaceSpec& space, const std::string& subsystem,
                                 const std::string& label) {
  const std::size_t p = space.position_of(subsystem);
  const std::size_t want = space.subsystems()[p].index_of(label);
  const std::size_t stride = space.stride(p);
  const std::size_t d = space.subsystems()[p].dim();
  const auto n = static_cast<Eigen::Index>(space.total_dim());
  AmplitudeMatrix<Scalar> out = AmplitudeMatrix<Scalar>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    if ((static_cast<std::size_t>(i) / stride) % d == want) out(i, i) = Amplitude<Scalar>(1);
  return BasicLinearMap<Scalar>(space, std::move(out), false);
}

/// ‖M ψ‖².
template <typename Scalar>
Scalar expectation_norm(const BasicLinearMap<Scalar>& map, const BasicStateVector<Scalar>& psi) {
  return apply(map, psi).squared_norm();
}

template <typename Scalar>
bool equal_up_to_global_phase(const BasicStateVector<Scalar>& a, const BasicStateVector<Scalar>& b,
                              double tol = kGlobalPhaseTol) {
  return static_cast<double>(std::abs(inner(a, b))) >= 1.0 - tol;
}

/// max-entry norm of a - b.
template <typename Scalar>
double max_entry_distance(const BasicLinearMap<Scalar>& a, const BasicLinearMap<Scalar>& b) {
  detail::require_same_space(a.space(), b.space(), "distance");
  return detail::max_abs_entry(a.matrix() - b.matrix());
}

template <typename Scalar>
double max_entry_distance(const BasicStateVector<Scalar>& a, const BasicStateVector<Scalar>& b) {
  detail::require_same_space(a.space(), b.space(), "distance");
  return detail::max_abs_entry(a.amplitudes() - b.amplitudes());
}

}  // namespace mzx

#include "markersfm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "markersfm/errors.hpp"

namespace markersfm {

namespace {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using SpMat = Eigen::SparseMatrix<double>;

/// Pivots (and eigenvalues) of the Jacobi-scaled normal matrix below this
/// count as zero.
constexpr double kRankTolerance = 1e-10;

/// Reduced systems with more than this fraction of nonzero blocks are
/// factored densely.
constexpr double kDenseFill = 0.25;

/// [I | -[x]x]: derivative of exp(dxi^) x at dxi = 0, columns [rho; phi].
Mat36 point_generator(const Vec3 &x)
{
  Mat36 d;
  d << Mat3::Identity(), -skew(x);
  return d;
}

}  // namespace

std::string VariableId::str() const
{
  return (kind == VariableKind::MarkerPose ? "marker:" : "group:") + std::to_string(index);
}

std::string to_string(Termination t)
{
  switch (t) {
    case Termination::CostConverged: return "relative cost change below tolerance";
    case Termination::StepConverged: return "step norm below tolerance";
    case Termination::ZeroCost: return "zero cost";
    case Termination::MaxIterations: return "maximum iterations reached";
    case Termination::DampingExhausted: return "no cost-reducing step found";
  }
  return "unknown";
}

// --- FactorGraph -----------------------------------------------------------

void FactorGraph::add_variable(VariableId id, const Pose &estimate, bool fixed)
{
  if (!variables_.emplace(id, Variable{estimate, fixed}).second)
    throw std::invalid_argument("add_variable: duplicate " + id.str());
}

const Variable &FactorGraph::variable(VariableId id) const
{
  const auto it = variables_.find(id);
  if (it == variables_.end())
    throw std::invalid_argument("unknown variable " + id.str());
  return it->second;
}

void FactorGraph::set_estimate(VariableId id, const Pose &estimate)
{
  const auto it = variables_.find(id);
  if (it == variables_.end())
    throw std::invalid_argument("unknown variable " + id.str());
  it->second.estimate = estimate;
}

void FactorGraph::set_fixed(VariableId id, bool fixed)
{
  const auto it = variables_.find(id);
  if (it == variables_.end())
    throw std::invalid_argument("unknown variable " + id.str());
  it->second.fixed = fixed;
}

void FactorGraph::add_factor(const CornerFactor &factor)
{
  if (factor.group_var.kind != VariableKind::GroupPose || !has_variable(factor.group_var))
    throw std::invalid_argument("add_factor: missing group variable " + factor.group_var.str());
  if (factor.marker_var.kind != VariableKind::MarkerPose || !has_variable(factor.marker_var))
    throw std::invalid_argument("add_factor: missing marker variable " + factor.marker_var.str());
  if (!(factor.weight > 0.0))
    throw std::invalid_argument("add_factor: weight must be positive");
  if (factor.corner_index < 0 || factor.corner_index > 3)
    throw std::invalid_argument("add_factor: corner index outside 0..3");
  factors_.push_back(factor);
}

// --- residuals and Jacobians ----------------------------------------------

Vec2 residual(const CornerFactor &f, const Pose &group_from_world, const Pose &marker_from_world)
{
  const Vec3 world = inverse(marker_from_world)(f.marker_corner);
  const Vec3 cam = f.camera_from_group(group_from_world(world));
  return f.measurement - project(f.intrinsics, cam);
}

Mat26 jacobian_marker(const CornerFactor &f, const Pose &group_from_world,
                      const Pose &marker_from_world)
{
  const Pose camera_from_marker =
      f.camera_from_group * group_from_world * inverse(marker_from_world);
  const Vec3 cam = camera_from_marker(f.marker_corner);
  // X_cam(dxi) = camera_from_marker * exp(-dxi^) * X, residual = meas - project.
  return projection_jacobian(f.intrinsics, cam) * camera_from_marker.rotation *
         point_generator(f.marker_corner);
}

Mat26 jacobian_group(const CornerFactor &f, const Pose &group_from_world,
                     const Pose &marker_from_world)
{
  const Vec3 in_group = group_from_world(inverse(marker_from_world)(f.marker_corner));
  const Vec3 cam = f.camera_from_group(in_group);
  // X_cam(dxi) = camera_from_group * exp(dxi^) * X_group.
  return -projection_jacobian(f.intrinsics, cam) * f.camera_from_group.rotation *
         point_generator(in_group);
}

double robust_weight(double residual_norm, double delta)
{
  if (residual_norm <= delta)
    return 1.0;
  return delta / residual_norm;
}

double huber(double squared_norm, double delta)
{
  if (squared_norm <= delta * delta)
    return squared_norm;
  return 2.0 * delta * std::sqrt(squared_norm) - delta * delta;
}

double total_cost(const FactorGraph &graph)
{
  double cost = 0.0;
  for (const auto &f : graph.factors()) {
    const Pose &g = graph.estimate(f.group_var);
    const Pose &m = graph.estimate(f.marker_var);
    const Vec3 cam = f.camera_from_group(g(inverse(m)(f.marker_corner)));
    if (!(cam.z() > kMinDepth))
      continue;
    const double s = f.weight * (f.measurement - project(f.intrinsics, cam)).squaredNorm();
    cost += huber(s, graph.robust_delta());
  }
  return cost;
}

// --- solver ----------------------------------------------------------------

class GraphSolver
{
public:
  GraphSolver(FactorGraph &graph, const SolveSettings &settings)
    : graph_(graph), settings_(settings)
  {
    for (auto &[id, var] : graph_.variables_) {
      var_index_.emplace(id, vars_.size());
      vars_.push_back(&var);
      slot_.push_back(var.fixed ? -1 : static_cast<int>(free_ids_.size()));
      if (!var.fixed)
        free_ids_.push_back(id);
    }
    if (free_ids_.empty())
      throw std::invalid_argument("solve: graph has no free variables");

    std::map<std::pair<int, int>, int> pair_slot;
    links_.reserve(graph_.factors_.size());
    for (const auto &f : graph_.factors_) {
      Link l;
      l.group = var_index_.at(f.group_var);
      l.marker = var_index_.at(f.marker_var);
      const int a = slot_[l.group], b = slot_[l.marker];
      if (a >= 0 && b >= 0) {
        const auto key = std::minmax(a, b);
        auto it = pair_slot.find(key);
        if (it == pair_slot.end()) {
          it = pair_slot.emplace(key, static_cast<int>(pairs_.size())).first;
          pairs_.push_back(key);
        }
        l.pair = it->second;
      }
      links_.push_back(l);
    }
    build_schur_structure();
  }

  SolveReport run()
  {
    SolveReport report;
    std::vector<Pose> est(vars_.size());
    for (size_t i = 0; i < vars_.size(); ++i)
      est[i] = vars_[i]->estimate;

    long dropped = 0;
    linearize(est, report, dropped);
    double cost = cost_;
    report.initial_cost = cost;
    report.dropped_factors += dropped;
    check_rank();

    double lambda = settings_.initial_damping;
    Eigen::SimplicialLDLT<SpMat> ldlt;
    Eigen::LLT<Eigen::MatrixXd> dense_llt;
    bool analyzed = false;
    Reduction red;

    if (cost == 0.0) {
      report.converged = true;
      report.termination = Termination::ZeroCost;
    }

    while (!report.converged && report.iterations < settings_.max_iters) {
      ++report.iterations;
      Eigen::VectorXd step;
      bool ok = reduce(lambda, Eigen::VectorXd(), red);
      if (ok) {
        Eigen::VectorXd x_r;
        if (n_reduced_ > 0 && dense_) {
          dense_llt.compute(red.dense);
          ok = dense_llt.info() == Eigen::Success;
          if (ok)
            x_r = dense_llt.solve(red.b);
        } else if (n_reduced_ > 0) {
          if (!analyzed) {
            ldlt.analyzePattern(red.s);
            analyzed = true;
          }
          ldlt.factorize(red.s);
          ok = ldlt.info() == Eigen::Success;
          if (ok)
            x_r = ldlt.solve(red.b);
        }
        if (ok)
          step = back_substitute(red, x_r);
      }
      if (!ok || !step.allFinite()) {
        lambda *= 10.0;
        if (lambda > 1e16) {
          report.termination = Termination::DampingExhausted;
          break;
        }
        continue;
      }
      if (step.norm() < settings_.step_tol) {
        report.converged = true;
        report.termination = Termination::StepConverged;
        break;
      }

      std::vector<Pose> candidate = est;
      for (size_t i = 0; i < vars_.size(); ++i)
        if (slot_[i] >= 0)
          candidate[i] = perturb_left(est[i], Twist::from_vector(step.segment<6>(6 * slot_[i])));

      long cand_dropped = 0;
      const double cand_cost = evaluate(candidate, cand_dropped);
      if (cand_cost <= cost && cand_dropped <= dropped) {
        const double rel = cost > 0.0 ? (cost - cand_cost) / cost : 0.0;
        est.swap(candidate);
        lambda = std::max(lambda * 0.1, 1e-15);
        dropped = 0;
        linearize(est, report, dropped);
        report.dropped_factors += dropped;
        cost = cost_;
        if (cost == 0.0) {
          report.converged = true;
          report.termination = Termination::ZeroCost;
        } else if (rel < settings_.rel_cost_tol) {
          report.converged = true;
          report.termination = Termination::CostConverged;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No descent direction left at machine precision: a local minimum.
          report.converged = true;
          report.termination = Termination::DampingExhausted;
          break;
        }
      }
    }

    for (size_t i = 0; i < vars_.size(); ++i)
      if (slot_[i] >= 0)
        vars_[i]->estimate = est[i];
    report.final_cost = cost;
    return report;
  }

private:
  struct Link
  {
    size_t group = 0;
    size_t marker = 0;
    int pair = -1;
  };

  double evaluate(const std::vector<Pose> &est, long &dropped) const
  {
    const double delta = graph_.robust_delta_;
    double cost = 0.0;
    for (size_t k = 0; k < links_.size(); ++k) {
      const auto &f = graph_.factors_[k];
      const Pose &g = est[links_[k].group];
      const Pose &m = est[links_[k].marker];
      const Vec3 world = m.rotation.transpose() * (f.marker_corner - m.translation);
      const Vec3 cam = f.camera_from_group(g(world));
      if (!(cam.z() > kMinDepth)) {
        ++dropped;
        continue;
      }
      const double s = f.weight * (f.measurement - project(f.intrinsics, cam)).squaredNorm();
      cost += huber(s, delta);
    }
    return cost;
  }

  void linearize(const std::vector<Pose> &est, SolveReport &report, long &dropped)
  {
    const size_t nfree = free_ids_.size();
    diag_.assign(nfree, Mat6::Zero());
    off_.assign(pairs_.size(), Mat6::Zero());
    gradient_.setZero(static_cast<Eigen::Index>(nfree * 6));
    cost_ = 0.0;
    const double delta = graph_.robust_delta_;

    for (size_t k = 0; k < links_.size(); ++k) {
      const auto &f = graph_.factors_[k];
      const Link &l = links_[k];
      const Pose &g = est[l.group];
      const Pose &m = est[l.marker];
      const Vec3 world = m.rotation.transpose() * (f.marker_corner - m.translation);
      const Vec3 in_group = g(world);
      const Vec3 cam = f.camera_from_group(in_group);
      if (!(cam.z() > kMinDepth)) {
        ++dropped;
        continue;
      }
      const Vec2 r = f.measurement - project(f.intrinsics, cam);
      const double s = f.weight * r.squaredNorm();
      cost_ += huber(s, delta);
      const double w = f.weight * robust_weight(std::sqrt(s), delta);

      const Mat23 jp = projection_jacobian(f.intrinsics, cam);
      const int sg = slot_[l.group], sm = slot_[l.marker];
      Mat26 jg, jm;
      if (sg >= 0) {
        jg = -jp * f.camera_from_group.rotation * point_generator(in_group);
        ++report.group_jacobians;
        diag_[sg].noalias() += w * jg.transpose() * jg;
        gradient_.segment<6>(6 * sg).noalias() += w * jg.transpose() * r;
      }
      if (sm >= 0) {
        const Mat3 r_cm = f.camera_from_group.rotation * g.rotation * m.rotation.transpose();
        jm = jp * r_cm * point_generator(f.marker_corner);
        ++report.marker_jacobians;
        diag_[sm].noalias() += w * jm.transpose() * jm;
        gradient_.segment<6>(6 * sm).noalias() += w * jm.transpose() * r;
      }
      if (l.pair >= 0) {
        if (sg < sm)
          off_[l.pair].noalias() += w * jg.transpose() * jm;
        else
          off_[l.pair].noalias() += w * jm.transpose() * jg;
      }
    }
  }

  // The normal matrix is bipartite: factors only couple a group with a
  // marker. The larger free set is eliminated block by block and the reduced
  // system over the other set is factored sparsely.

  void build_schur_structure()
  {
    const size_t nfree = free_ids_.size();
    size_t free_markers = 0;
    for (const auto &id : free_ids_)
      free_markers += id.kind == VariableKind::MarkerPose;
    const VariableKind elim_kind = 2 * free_markers >= nfree ? VariableKind::MarkerPose
                                                             : VariableKind::GroupPose;
    reduced_of_.assign(nfree, -1);
    elim_of_.assign(nfree, -1);
    for (size_t v = 0; v < nfree; ++v) {
      if (free_ids_[v].kind == elim_kind) {
        elim_of_[v] = static_cast<int>(elim_.size());
        elim_.push_back(static_cast<int>(v));
      } else {
        reduced_of_[v] = n_reduced_++;
        reduced_.push_back(static_cast<int>(v));
      }
    }

    adj_.assign(elim_.size(), {});
    for (size_t p = 0; p < pairs_.size(); ++p) {
      const auto [a, b] = pairs_[p];
      const int e = elim_of_[a] >= 0 ? a : b;
      const int r = e == a ? b : a;
      adj_[elim_of_[e]].push_back({r, static_cast<int>(p)});
    }

    std::map<std::pair<int, int>, int> index;
    fill_.assign(elim_.size(), {});
    for (size_t e = 0; e < elim_.size(); ++e) {
      auto &adj = adj_[e];
      std::sort(adj.begin(), adj.end(), [](const Adj &x, const Adj &y) { return x.r < y.r; });
      for (size_t i = 0; i < adj.size(); ++i)
        for (size_t j = i + 1; j < adj.size(); ++j) {
          const std::pair key(reduced_of_[adj[i].r], reduced_of_[adj[j].r]);
          auto it = index.find(key);
          if (it == index.end()) {
            it = index.emplace(key, static_cast<int>(reduced_pairs_.size())).first;
            reduced_pairs_.push_back(key);
          }
          fill_[e].push_back(it->second);
        }
    }
    const double blocks = double(n_reduced_) + 2.0 * double(reduced_pairs_.size());
    dense_ = blocks > kDenseFill * double(n_reduced_) * double(n_reduced_);
  }

  /// Diagonal block of free slot v with Marquardt damping, then Jacobi
  /// scaling when `scale` is non-empty.
  Mat6 diag_block(int v, double lambda, const Eigen::VectorXd &scale) const
  {
    Mat6 d = diag_[v];
    d.diagonal() += lambda * d.diagonal().cwiseMax(1e-12);
    if (scale.size() > 0)
      d = scale.segment<6>(6 * v).asDiagonal() * d * scale.segment<6>(6 * v).asDiagonal();
    return d;
  }

  /// H(e, r) for eliminated slot e, reduced slot r and their pair index.
  Mat6 coupling(int e, int r, int pair, const Eigen::VectorXd &scale) const
  {
    Mat6 h = off_[pair];
    if (e > r)
      h.transposeInPlace();
    if (scale.size() > 0)
      h = scale.segment<6>(6 * e).asDiagonal() * h * scale.segment<6>(6 * r).asDiagonal();
    return h;
  }

  struct Reduction
  {
    std::vector<Eigen::LDLT<Mat6>> elim;  ///< factored eliminated blocks
    std::vector<std::vector<Mat6>> y;     ///< E^-1 H(e, r) per adjacency
    std::vector<Vec6> ge;                 ///< E^-1 rhs_e
    SpMat s;                ///< reduced matrix when sparse
    Eigen::MatrixXd dense;  ///< reduced matrix when dense
    Eigen::VectorXd b;
    std::vector<int> singular;  ///< eliminated indices with a pivot <= tolerance
  };

  /// Schur complement of (H + lambda D) x = -gradient. With a non-empty
  /// scale the Jacobi-scaled matrix is reduced instead and the right-hand side
  /// is irrelevant. Returns false when an eliminated block is not positive
  /// definite.
  bool reduce(double lambda, const Eigen::VectorXd &scale, Reduction &red) const
  {
    const size_t ne = elim_.size();
    const Eigen::Index nr = 6 * n_reduced_;
    red.elim.resize(ne);
    red.y.resize(ne);
    red.ge.resize(ne);
    red.singular.clear();
    std::vector<Mat6> rdiag(static_cast<size_t>(n_reduced_)), roff;
    for (int i = 0; i < n_reduced_; ++i)
      rdiag[size_t(i)] = diag_block(reduced_[size_t(i)], lambda, scale);
    if (dense_)
      red.dense.setZero(nr, nr);
    else
      roff.assign(reduced_pairs_.size(), Mat6::Zero());
    red.b.resize(nr);
    for (int i = 0; i < n_reduced_; ++i)
      red.b.segment<6>(6 * i) = -gradient_.segment<6>(6 * reduced_[size_t(i)]);

    std::vector<Mat6> hc;
    for (size_t k = 0; k < ne; ++k) {
      const int e = elim_[k];
      auto &ldlt = red.elim[k];
      ldlt.compute(diag_block(e, lambda, scale));
      if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > kRankTolerance)) {
        red.singular.push_back(static_cast<int>(k));
        continue;
      }
      const auto &adj = adj_[k];
      const size_t n = adj.size();
      auto &y = red.y[k];
      hc.resize(n);
      y.resize(n);
      for (size_t i = 0; i < n; ++i) {
        hc[i] = coupling(e, adj[i].r, adj[i].pair, scale);
        y[i] = ldlt.solve(hc[i]);
      }
      const Vec6 rhs = -gradient_.segment<6>(6 * e);
      red.ge[k] = ldlt.solve(rhs);
      size_t f = 0;
      for (size_t i = 0; i < n; ++i) {
        // H(r_i, e) E^-1 = y_i^T by symmetry.
        const int ri = reduced_of_[adj[i].r];
        const Mat6 yt = y[i].transpose();
        red.b.segment<6>(6 * ri).noalias() -= yt * rhs;
        rdiag[size_t(ri)].noalias() -= yt * hc[i];
        for (size_t j = i + 1; j < n; ++j, ++f) {
          if (dense_) {
            const int rj = reduced_of_[adj[j].r];
            red.dense.block<6, 6>(6 * ri, 6 * rj).noalias() -= yt * hc[j];
          } else {
            roff[size_t(fill_[k][f])].noalias() -= yt * hc[j];
          }
        }
      }
    }
    if (!red.singular.empty())
      return false;

    if (dense_) {
      // Only blocks (r_i, r_j) with r_i < r_j were accumulated above.
      for (size_t v = 0; v < rdiag.size(); ++v)
        red.dense.block<6, 6>(6 * v, 6 * v) = rdiag[v];
      red.dense.triangularView<Eigen::StrictlyLower>() = red.dense.transpose();
      return true;
    }
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(rdiag.size() * 36 + roff.size() * 72);
    for (size_t v = 0; v < rdiag.size(); ++v) {
      const int o = static_cast<int>(v) * 6;
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
          trip.emplace_back(o + i, o + j, rdiag[v](i, j));
    }
    for (size_t p = 0; p < roff.size(); ++p) {
      const int oi = reduced_pairs_[p].first * 6, oj = reduced_pairs_[p].second * 6;
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
          trip.emplace_back(oi + i, oj + j, roff[p](i, j));
          trip.emplace_back(oj + j, oi + i, roff[p](i, j));
        }
    }
    red.s.resize(nr, nr);
    red.s.setFromTriplets(trip.begin(), trip.end());
    return true;
  }

  /// Full step from the reduced solution: x_e = E^-1 (rhs_e - H(e, r) x_r).
  Eigen::VectorXd back_substitute(const Reduction &red, const Eigen::VectorXd &x_r) const
  {
    Eigen::VectorXd step(static_cast<Eigen::Index>(free_ids_.size() * 6));
    for (int i = 0; i < n_reduced_; ++i)
      step.segment<6>(6 * reduced_[size_t(i)]) = x_r.segment<6>(6 * i);
    for (size_t k = 0; k < elim_.size(); ++k) {
      Vec6 x = red.ge[k];
      for (size_t i = 0; i < adj_[k].size(); ++i)
        x.noalias() -= red.y[k][i] * x_r.segment<6>(6 * reduced_of_[adj_[k][i].r]);
      step.segment<6>(6 * elim_[k]) = x;
    }
    return step;
  }

  /// Singular undamped normal equations mean an under-constrained graph.
  /// Pivots are taken from the Jacobi-scaled matrix, eliminated blocks first.
  void check_rank() const
  {
    std::vector<std::string> bad;
    for (size_t v = 0; v < diag_.size(); ++v)
      if ((diag_[v].diagonal().array() <= 0.0).any())
        bad.push_back(free_ids_[v].str());
    if (!bad.empty())
      throw RankDeficiencyError("solve: free variables without constraints", bad);

    Eigen::VectorXd scale(static_cast<Eigen::Index>(diag_.size() * 6));
    for (size_t v = 0; v < diag_.size(); ++v)
      scale.segment<6>(6 * v) = diag_[v].diagonal().cwiseSqrt().cwiseInverse();

    Reduction red;
    if (!reduce(0.0, scale, red)) {
      for (int k : red.singular)
        bad.push_back(free_ids_[size_t(elim_[size_t(k)])].str());
      throw RankDeficiencyError("solve: normal equations are rank deficient", bad);
    }
    if (n_reduced_ == 0)
      return;

    std::vector<bool> flagged(size_t(n_reduced_), false);
    if (dense_) {
      // Every pivot exceeds the tolerance when the shifted matrix is still
      // positive definite; only otherwise are the pivots examined.
      Eigen::MatrixXd shifted = red.dense;
      shifted.diagonal().array() -= kRankTolerance;
      if (Eigen::LLT<Eigen::MatrixXd>(shifted).info() == Eigen::Success)
        return;
      // Diagonal pivoting; row p of the permuted system is reduced variable
      // (P * index)(p) / 6.
      const Eigen::LDLT<Eigen::MatrixXd> dldlt(red.dense);
      const Eigen::VectorXd d = dldlt.vectorD();
      const Eigen::VectorXi index =
          dldlt.transpositionsP() * Eigen::VectorXi::LinSpaced(d.size(), 0, int(d.size()) - 1);
      for (Eigen::Index p = 0; p < d.size(); ++p)
        if (!(d(p) > kRankTolerance))
          flagged[size_t(index(p) / 6)] = true;
      for (size_t i = 0; i < flagged.size(); ++i)
        if (flagged[i])
          bad.push_back(free_ids_[size_t(reduced_[i])].str());
      if (!bad.empty())
        throw RankDeficiencyError("solve: normal equations are rank deficient", bad);
      return;
    }

    // Row p of the permuted system is reduced variable pinv(p) / 6.
    Eigen::SimplicialLDLT<SpMat> ldlt(red.s);
    if (ldlt.info() == Eigen::Success) {
      const Eigen::VectorXd d = ldlt.vectorD();
      const auto &pinv = ldlt.permutationPinv().indices();
      for (Eigen::Index p = 0; p < d.size(); ++p)
        if (!(d(p) > kRankTolerance))
          flagged[size_t(pinv(p) / 6)] = true;
    } else {
      flagged.assign(flagged.size(), true);
    }
    for (size_t i = 0; i < flagged.size(); ++i)
      if (flagged[i])
        bad.push_back(free_ids_[size_t(reduced_[i])].str());
    if (!bad.empty())
      throw RankDeficiencyError("solve: normal equations are rank deficient", bad);
  }

  FactorGraph &graph_;
  SolveSettings settings_;

  std::map<VariableId, size_t> var_index_;
  std::vector<Variable *> vars_;
  std::vector<int> slot_;  ///< free slot per variable, -1 when fixed
  std::vector<VariableId> free_ids_;
  std::vector<Link> links_;
  std::vector<std::pair<int, int>> pairs_;

  struct Adj
  {
    int r = 0;     ///< reduced free slot
    int pair = 0;  ///< index into pairs_
  };
  std::vector<int> elim_, reduced_;         ///< free slots of each set
  std::vector<int> elim_of_, reduced_of_;   ///< free slot -> index in its set, else -1
  int n_reduced_ = 0;
  bool dense_ = false;  ///< factor the reduced system densely
  std::vector<std::vector<Adj>> adj_;       ///< per eliminated variable, sorted by slot
  std::vector<std::pair<int, int>> reduced_pairs_;  ///< fill blocks (i < j) of the reduced system
  std::vector<std::vector<int>> fill_;      ///< per eliminated variable, its (i < j) adjacency blocks

  std::vector<Mat6> diag_;
  std::vector<Mat6> off_;
  Eigen::VectorXd gradient_;
  double cost_ = 0.0;
};

SolveReport solve(FactorGraph &graph, const SolveSettings &settings)
{
  GraphSolver solver(graph, settings);
  return solver.run();
}

}  // namespace markersfm

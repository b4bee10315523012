#include "fourwisd/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace fourwisd::qp {

double kkt_residual(const Problem& prob, const VecX& x, const VecX& lambda) {
  VecX grad = prob.h * x + prob.f;
  if (prob.a.rows() > 0) grad += prob.a.transpose() * lambda;
  double res = grad.lpNorm<Eigen::Infinity>();
  if (prob.a.rows() > 0) {
    const VecX slack = prob.a * x - prob.b;
    res += slack.cwiseMax(0.0).lpNorm<Eigen::Infinity>();
    res += (lambda.array() * slack.array()).abs().maxCoeff();
  }
  return res;
}

namespace {

int count_active(const VecX& lambda) {
  if (lambda.size() == 0) return 0;
  const double thresh = 1e-12 * std::max(1.0, lambda.maxCoeff());
  return static_cast<int>((lambda.array() > thresh).count());
}

// Dual active-set walk from the unconstrained optimum: repeatedly pick the
// most violated constraint, then raise its multiplier — taking partial steps
// that release blocking rows of the working set — until it becomes tight.
// The working set stays dually feasible throughout, so the iterate at
// termination is the exact optimum (up to linear-solve precision). Accepts
// into `out` only when it improves the KKT residual; returns success.
bool dual_active_set(const Problem& prob, const Eigen::LLT<MatX>& llt,
                     double feas_scale, Result* out) {
  const int n = static_cast<int>(prob.h.rows());
  const int m = static_cast<int>(prob.a.rows());
  VecX x = -llt.solve(prob.f);
  std::vector<int> work;
  std::vector<double> lam;

  const double feas_tol = 1e-10 * feas_scale;
  for (int outer = 0; outer < 5 * m + 20; ++outer) {
    const VecX s = prob.a * x - prob.b;
    int p = -1;
    double worst = feas_tol;
    for (int r = 0; r < m; ++r) {
      if (s[r] > worst &&
          std::find(work.begin(), work.end(), r) == work.end()) {
        worst = s[r];
        p = r;
      }
    }
    if (p < 0) {
      VecX full = VecX::Zero(m);
      for (std::size_t i = 0; i < work.size(); ++i) {
        full[work[i]] = std::max(0.0, lam[i]);
      }
      const double res = kkt_residual(prob, x, full);
      if (res < out->kkt_residual) {
        out->x = x;
        out->lambda = full;
        out->kkt_residual = res;
        out->converged = true;
      }
      return true;
    }

    const VecX n_p = prob.a.row(p).transpose();
    double lam_p = 0.0;
    bool added = false;
    for (int inner = 0; inner <= n + 1; ++inner) {
      const int k = static_cast<int>(work.size());
      const VecX hin_p = llt.solve(n_p);
      VecX z = hin_p;
      VecX r_vec(k);
      if (k > 0) {
        MatX nmat(n, k);
        for (int i = 0; i < k; ++i) {
          nmat.col(i) = prob.a.row(work[i]).transpose();
        }
        const MatX hin_n = llt.solve(nmat);
        const MatX gram = nmat.transpose() * hin_n;
        r_vec = Eigen::FullPivLU<MatX>(gram).solve(nmat.transpose() * hin_p);
        z -= hin_n * r_vec;
      }

      const double denom = n_p.dot(z);
      const double viol = n_p.dot(x) - prob.b[p];
      double t_full = std::numeric_limits<double>::infinity();
      if (denom > 1e-13 * (1.0 + n_p.squaredNorm())) t_full = viol / denom;
      double t_block = std::numeric_limits<double>::infinity();
      int blocking = -1;
      for (int i = 0; i < k; ++i) {
        if (r_vec[i] > 1e-13 && lam[i] / r_vec[i] < t_block) {
          t_block = lam[i] / r_vec[i];
          blocking = i;
        }
      }
      const double t = std::min(t_block, t_full);
      if (!std::isfinite(t)) return false;  // no feasible progress

      x -= t * z;
      for (int i = 0; i < k; ++i) lam[i] = std::max(0.0, lam[i] - t * r_vec[i]);
      lam_p += t;
      if (t_full <= t_block) {
        work.push_back(p);
        lam.push_back(lam_p);
        added = true;
        break;
      }
      work.erase(work.begin() + blocking);
      lam.erase(lam.begin() + blocking);
    }
    if (!added) return false;
  }
  return false;
}

}  // namespace

Result solve(const Problem& prob, const Options& opt, const VecX* warm) {
  const int n = static_cast<int>(prob.h.rows());
  const int m = static_cast<int>(prob.a.rows());
  if (prob.h.cols() != n || prob.f.size() != n ||
      (m > 0 && prob.a.cols() != n) || prob.b.size() != m) {
    throw std::invalid_argument("inconsistent problem dimensions");
  }
  Eigen::LLT<MatX> llt(prob.h);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("quadratic term must be positive definite");
  }

  Result out;
  const VecX x_free = -llt.solve(prob.f);
  if (m == 0) {
    out.x = x_free;
    out.lambda = VecX();
    out.converged = true;
    return out;
  }

  const double feas_scale = 1.0 + prob.b.cwiseAbs().maxCoeff();
  if (((prob.a * x_free - prob.b).array() <= opt.tolerance * feas_scale)
          .all()) {
    out.x = x_free;
    out.lambda = VecX::Zero(m);
    out.converged = true;
    out.kkt_residual = kkt_residual(prob, out.x, out.lambda);
    return out;
  }

  const MatX hinv_at = llt.solve(prob.a.transpose());
  const MatX p = prob.a * hinv_at;
  const VecX d = prob.b + prob.a * llt.solve(prob.f);

  VecX lambda = VecX::Zero(m);
  if (warm && warm->size() == m) lambda = warm->cwiseMax(0.0);

  int sweeps = 0;
  while (sweeps < opt.max_iterations) {
    ++sweeps;
    double max_change = 0.0;
    for (int i = 0; i < m; ++i) {
      if (p(i, i) < 1e-14) continue;
      const double w = d[i] + p.row(i).dot(lambda) - p(i, i) * lambda[i];
      const double next = std::max(0.0, -w / p(i, i));
      max_change = std::max(max_change, std::abs(next - lambda[i]));
      lambda[i] = next;
    }
    if (max_change < opt.tolerance * (1.0 + lambda.lpNorm<Eigen::Infinity>())) {
      out.converged = true;
      break;
    }
  }
  out.iterations = sweeps;
  out.lambda = lambda;
  out.x = -(llt.solve(prob.f) + hinv_at * lambda);
  out.kkt_residual = kkt_residual(prob, out.x, out.lambda);

  // The coordinate iteration converges linearly and may stop short on
  // ill-conditioned duals; when its answer is not already tight, snap to the
  // exact optimum with the active-set walk.
  const double accept = opt.tolerance *
                        (1.0 + prob.f.lpNorm<Eigen::Infinity>() +
                         prob.b.lpNorm<Eigen::Infinity>());
  if (!(out.kkt_residual <= accept)) {
    dual_active_set(prob, llt, feas_scale, &out);
  }
  out.active_set_size = count_active(out.lambda);
  return out;
}

}  // namespace fourwisd::qp

namespace fourwisd::ctrl {

MpcController::MpcController(const VehicleParams& p, const MpcConfig& cfg)
    : p_(p), cfg_(cfg) {}

void MpcController::reset(const Vec4& u0) {
  u_prev_ = u0;
  warm_lambda_.resize(0);
}

Vec4 MpcController::compute(const Vec5& x, const Vec4& fx, double vy_hat,
                            const std::vector<double>& phi_ref,
                            const std::vector<double>& y_ref,
                            MpcDiagnostics* diag) {
  const int np = cfg_.horizon;
  const int nu = cfg_.control_steps;
  if (static_cast<int>(phi_ref.size()) < np ||
      static_cast<int>(y_ref.size()) < np) {
    throw std::invalid_argument("reference shorter than the prediction horizon");
  }

  ModelInputs in;
  in.delta = u_prev_;
  in.fx = fx;
  in.vy_hat = vy_hat;
  const double h = cfg_.prediction_dt > 0.0 ? cfg_.prediction_dt : p_.dt;
  const Linearization lin = linearize(x, in, p_, h, cfg_.model);

  // Prediction on the augmented state [x; u_prev], driven by steer increments.
  Mat9 a = Mat9::Zero();
  a.topLeftCorner<5, 5>() = lin.a_d;
  a.topRightCorner<5, 4>() = lin.b_d;
  a.bottomRightCorner<4, 4>().setIdentity();
  Eigen::Matrix<double, 9, 4> bmat = Eigen::Matrix<double, 9, 4>::Zero();
  bmat.topRows<5>() = lin.b_d;
  bmat.bottomRows<4>().setIdentity();
  Eigen::Matrix<double, 2, 9> c = Eigen::Matrix<double, 2, 9>::Zero();
  c(0, 3) = 1.0;
  c(1, 4) = 1.0;

  const int ny = 2 * np;
  const int nz = 4 * nu;
  MatX fmat(ny, 9);
  MatX hmat = MatX::Zero(ny, nz);
  std::vector<Eigen::Matrix<double, 2, 4>> cab(np);
  Mat9 apk = Mat9::Identity();
  for (int k = 0; k < np; ++k) {
    cab[k] = c * apk * bmat;
    apk = apk * a;  // now A^{k+1}
    fmat.middleRows(2 * k, 2) = c * apk;
  }
  for (int j = 1; j <= np; ++j) {
    for (int i = 0; i < std::min(j, nu); ++i) {
      hmat.block(2 * (j - 1), 4 * i, 2, 4) = cab[j - 1 - i];
    }
  }

  Vec9 xtilde;
  xtilde << x, u_prev_;
  const VecX y_free = fmat * xtilde;
  VecX xi(ny);
  for (int j = 0; j < np; ++j) {
    xi[2 * j] = phi_ref[j];
    xi[2 * j + 1] = y_ref[j];
  }

  const MatX e = cfg_.q_output * hmat.transpose() * hmat +
                 cfg_.r_move * MatX::Identity(nz, nz);
  const VecX bvec = cfg_.q_output * hmat.transpose() * (xi - y_free);

  // Hard rows: slew, absolute steer, then the output corridor (which may be
  // softened row by row when the free response already violates it).
  const double du_max = cfg_.steer_rate_limit * h;
  const int n_rate = 2 * nz;
  const int n_input = 2 * nz;
  const int n_out = 2 * ny;
  MatX rows(n_rate + n_input + n_out, nz);
  VecX rhs(rows.rows());
  rows.topRows(nz) = MatX::Identity(nz, nz);
  rows.middleRows(nz, nz) = -MatX::Identity(nz, nz);
  rhs.head(2 * nz).setConstant(du_max);

  MatX cum = MatX::Zero(nz, nz);
  for (int i = 0; i < nu; ++i) {
    for (int l = 0; l <= i; ++l) {
      cum.block(4 * i, 4 * l, 4, 4).setIdentity();
    }
  }
  rows.middleRows(n_rate, nz) = cum;
  rows.middleRows(n_rate + nz, nz) = -cum;
  for (int i = 0; i < nu; ++i) {
    for (int w = 0; w < 4; ++w) {
      rhs[n_rate + 4 * i + w] = cfg_.steer_limit - u_prev_[w];
      rhs[n_rate + nz + 4 * i + w] = cfg_.steer_limit + u_prev_[w];
    }
  }

  const int out0 = n_rate + n_input;
  for (int j = 0; j < np; ++j) {
    for (int ch = 0; ch < 2; ++ch) {
      const double bound = ch == 0 ? cfg_.heading_limit : cfg_.lateral_limit;
      const int r = 2 * j + ch;
      rows.row(out0 + 2 * r) = hmat.row(r);
      rhs[out0 + 2 * r] = bound - y_free[r];
      rows.row(out0 + 2 * r + 1) = -hmat.row(r);
      rhs[out0 + 2 * r + 1] = bound + y_free[r];
    }
  }

  // Corridor rows that exclude the zero move are softened with slack
  // variables so the program always has a feasible point.
  std::vector<int> soft;
  for (int r = out0; r < rows.rows(); ++r) {
    if (rhs[r] < 0.0) soft.push_back(r);
  }
  const int ns = static_cast<int>(soft.size());
  const int dim = nz + ns;

  qp::Problem prob;
  prob.h = MatX::Zero(dim, dim);
  prob.h.topLeftCorner(nz, nz) = 2.0 * e;
  prob.h.bottomRightCorner(ns, ns) =
      2.0 * cfg_.slack_penalty * MatX::Identity(ns, ns);
  prob.f = VecX::Zero(dim);
  prob.f.head(nz) = -2.0 * bvec;
  prob.a = MatX::Zero(rows.rows() + ns, dim);
  prob.a.topLeftCorner(rows.rows(), nz) = rows;
  prob.b = VecX(rows.rows() + ns);
  prob.b.head(rows.rows()) = rhs;
  for (int k = 0; k < ns; ++k) {
    prob.a(soft[k], nz + k) = -1.0;         // row z - s_k <= rhs
    prob.a(rows.rows() + k, nz + k) = -1.0;  // s_k >= 0
    prob.b[rows.rows() + k] = 0.0;
  }

  const qp::Result sol =
      qp::solve(prob, cfg_.qp,
                warm_lambda_.size() == prob.a.rows() ? &warm_lambda_ : nullptr);
  warm_lambda_ = sol.lambda;

  const VecX dU = sol.x.head(nz);
  // The plan's first move covers one prediction step; only one control
  // period's worth of it is applied before the next re-solve.
  const double du_apply = cfg_.steer_rate_limit * p_.dt;
  Vec4 du = dU.head<4>();
  for (int w = 0; w < 4; ++w) du[w] = std::clamp(du[w], -du_apply, du_apply);
  Vec4 u = u_prev_ + du;
  for (int w = 0; w < 4; ++w) {
    u[w] = std::clamp(u[w], -cfg_.steer_limit, cfg_.steer_limit);
  }

  if (diag) {
    const VecX track = y_free + hmat * dU - xi;
    const VecX slack = sol.x.tail(ns);
    diag->cost = cfg_.q_output * track.squaredNorm() +
                 cfg_.r_move * dU.squaredNorm() +
                 cfg_.slack_penalty * slack.squaredNorm();
    diag->qp_iterations = sol.iterations;
    diag->active_set_size = sol.active_set_size;
    diag->kkt_residual = sol.kkt_residual;
    diag->soft_rows = ns;
    diag->converged = sol.converged;
    diag->du = u - u_prev_;
  }
  u_prev_ = u;
  return u;
}

}  // namespace fourwisd::ctrl

#include "pdmplab/boxqp.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <optional>
#include <vector>

namespace pdmplab {

namespace {

constexpr double kLabelTol = 1e-9;

void validate(const BoxQpProblem& p) {
    const Eigen::Index k = p.H.rows();
    if (k == 0 || p.H.cols() != k || p.c.size() != k)
        throw std::domain_error("boxqp: H must be square and match c");
    const double scale = std::max(1.0, p.H.cwiseAbs().maxCoeff());
    if ((p.H - p.H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw std::domain_error("boxqp: H must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> eig(p.H, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0))
        throw std::domain_error("boxqp: H must be positive definite");
}

double objective(const BoxQpProblem& p, const Vec& v) {
    return 0.5 * v.dot(p.H * v) + p.c.dot(v);
}

// Builds the certificate for an exact candidate: bound coordinates at +/-1,
// free coordinates from the free-block solve. Returns nullopt when the
// candidate is infeasible or a multiplier has the wrong sign.
std::optional<BoxQpSolution> certify(const BoxQpProblem& p, const std::vector<int>& sigma,
                                     double tol) {
    const Eigen::Index k = p.H.rows();
    std::vector<Eigen::Index> free;
    Vec v(k);
    for (Eigen::Index n = 0; n < k; ++n) {
        if (sigma[static_cast<size_t>(n)] == 0)
            free.push_back(n);
        else
            v[n] = sigma[static_cast<size_t>(n)];
    }
    if (!free.empty()) {
        Mat hff(free.size(), free.size());
        Vec rhs(free.size());
        for (size_t i = 0; i < free.size(); ++i) {
            rhs[static_cast<Eigen::Index>(i)] = -p.c[free[i]];
            for (size_t j = 0; j < free.size(); ++j) hff(i, j) = p.H(free[i], free[j]);
        }
        for (Eigen::Index n = 0; n < k; ++n) {
            if (sigma[static_cast<size_t>(n)] == 0) continue;
            for (size_t i = 0; i < free.size(); ++i)
                rhs[static_cast<Eigen::Index>(i)] -= p.H(free[i], n) * v[n];
        }
        const Vec vf = Eigen::LLT<Mat>(hff).solve(rhs);
        for (size_t i = 0; i < free.size(); ++i) {
            if (std::abs(vf[static_cast<Eigen::Index>(i)]) > 1.0 + tol) return std::nullopt;
            v[free[i]] = std::clamp(vf[static_cast<Eigen::Index>(i)], -1.0, 1.0);
        }
    }
    const Vec g = p.H * v + p.c;
    BoxQpSolution sol;
    sol.v = v;
    sol.alpha = Vec::Zero(k);
    sol.beta = Vec::Zero(k);
    sol.labels.assign(static_cast<size_t>(k), BoxLabel::snapping);
    for (Eigen::Index n = 0; n < k; ++n) {
        const int s = sigma[static_cast<size_t>(n)];
        if (s == +1) {
            if (g[n] > tol) return std::nullopt;  // alpha would be negative
            sol.alpha[n] = std::max(0.0, -g[n]);
            sol.labels[static_cast<size_t>(n)] = BoxLabel::clippedPlus;
        } else if (s == -1) {
            if (g[n] < -tol) return std::nullopt;
            sol.beta[n] = std::max(0.0, g[n]);
            sol.labels[static_cast<size_t>(n)] = BoxLabel::clippedMinus;
        }
    }
    sol.objective = objective(p, v);
    return sol;
}

void relabel_boundary(BoxQpSolution& sol) {
    // label by position: within 1e-9 of a bound counts as clipped even if the
    // multiplier vanishes there (degenerate contact)
    bool degenerate = false;
    for (Eigen::Index n = 0; n < sol.v.size(); ++n) {
        const size_t un = static_cast<size_t>(n);
        if (sol.v[n] >= 1.0 - kLabelTol) {
            if (sol.labels[un] != BoxLabel::clippedPlus && sol.alpha[n] <= kLabelTol)
                degenerate = true;
            sol.labels[un] = BoxLabel::clippedPlus;
        } else if (sol.v[n] <= -1.0 + kLabelTol) {
            if (sol.labels[un] != BoxLabel::clippedMinus && sol.beta[n] <= kLabelTol)
                degenerate = true;
            sol.labels[un] = BoxLabel::clippedMinus;
        } else {
            sol.labels[un] = BoxLabel::snapping;
        }
    }
    if (degenerate && !sol.degenerate) {
        sol.degenerate = true;
        std::clog << "boxqp: boundary contact with zero multiplier; labeled clipped\n";
    }
}

}  // namespace

BoxQpSolution solve_boxqp(const BoxQpProblem& p) {
    validate(p);
    const Eigen::Index k = p.H.rows();
    const double cScale = std::max({1.0, p.c.cwiseAbs().maxCoeff(), p.H.cwiseAbs().maxCoeff()});

    // start from the clamped unconstrained minimiser
    Vec v = (Eigen::LLT<Mat>(p.H).solve(-p.c)).cwiseMax(-1.0).cwiseMin(1.0);

    // cyclic coordinate descent (each update is an exact 1-D minimisation),
    // polished by an exact free-block solve once the active pattern settles
    const int maxSweeps = 300 + 60 * static_cast<int>(k);
    for (int sweep = 0; sweep < maxSweeps; ++sweep) {
        Vec g = p.H * v + p.c;
        for (Eigen::Index n = 0; n < k; ++n) {
            const double step = g[n] / p.H(n, n);
            const double vn = std::clamp(v[n] - step, -1.0, 1.0);
            if (vn != v[n]) {
                g += p.H.col(n) * (vn - v[n]);
                v[n] = vn;
            }
        }
        std::vector<int> sigma(static_cast<size_t>(k), 0);
        const double edge = sweep < 8 ? 1e-12 : 1e-9 * (1 << std::min(sweep / 8, 20));
        for (Eigen::Index n = 0; n < k; ++n) {
            if (v[n] >= 1.0 - edge) sigma[static_cast<size_t>(n)] = +1;
            else if (v[n] <= -1.0 + edge) sigma[static_cast<size_t>(n)] = -1;
        }
        if (auto sol = certify(p, sigma, 1e-10 * cScale)) {
            relabel_boundary(*sol);
            return *sol;
        }
    }
    throw std::runtime_error("solve_boxqp: active set did not settle");
}

BoxQpSolution solve_boxqp_oracle(const BoxQpProblem& p) {
    validate(p);
    const Eigen::Index k = p.H.rows();
    if (k > 12) throw QpSizeError("solve_boxqp_oracle: K must be <= 12");

    std::optional<BoxQpSolution> best;
    std::vector<int> sigma(static_cast<size_t>(k), -1);
    long total = 1;
    for (Eigen::Index i = 0; i < k; ++i) total *= 3;
    for (long code = 0; code < total; ++code) {
        long r = code;
        for (Eigen::Index i = 0; i < k; ++i) {
            sigma[static_cast<size_t>(i)] = static_cast<int>(r % 3) - 1;
            r /= 3;
        }
        auto sol = certify(p, sigma, 1e-9);
        if (sol && (!best || sol->objective < best->objective)) best = std::move(sol);
    }
    if (!best) throw std::runtime_error("solve_boxqp_oracle: no feasible KKT candidate");
    relabel_boundary(*best);
    return *best;
}

Classification classify(const BoxQpSolution& sol) {
    Classification out;
    for (Eigen::Index n = 0; n < sol.v.size(); ++n) {
        if (std::abs(std::abs(sol.v[n]) - 1.0) <= kLabelTol)
            out.clipped.push_back(static_cast<int>(n));
        else
            out.snapping.push_back(static_cast<int>(n));
    }
    return out;
}

}  // namespace pdmplab

#include "mvrds/measure.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numeric>

namespace mvrds {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline double cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t i, std::size_t j, double p) {
    const double r = (mu.atom(i) - nu.atom(j)).norm();
    return p == 1.0 ? r : (p == 2.0 ? r * r : std::pow(r, p));
}

Mat cost_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
    Mat c(static_cast<long>(mu.size()), static_cast<long>(nu.size()));
    for (std::size_t j = 0; j < nu.size(); ++j)
        for (std::size_t i = 0; i < mu.size(); ++i) c(static_cast<long>(i), static_cast<long>(j)) = cost(mu, nu, i, j, p);
    return c;
}

bool identical(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    return mu.dim() == nu.dim() && mu.size() == nu.size() && (mu.atoms().array() == nu.atoms().array()).all() &&
           (mu.weights().array() == nu.weights().array()).all();
}

// Summing in sorted order makes the exact solvers bitwise symmetric in (mu, nu).
double ordered_sum(std::vector<double> terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

WassersteinResult finish(double total, double p, bool exact, std::string method, double gap,
                         std::vector<CouplingEntry> coupling) {
    WassersteinResult r;
    r.value = std::pow(std::max(total, 0.0), 1.0 / p);
    r.exact = exact;
    r.method = std::move(method);
    r.duality_gap = gap;
    r.coupling = std::move(coupling);
    return r;
}

WassersteinResult quantile(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
    std::vector<std::size_t> a(mu.size()), b(nu.size());
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), 0);
    const Vec& xa = mu.atoms().row(0).transpose();
    const Vec& xb = nu.atoms().row(0).transpose();
    std::sort(a.begin(), a.end(), [&](std::size_t x, std::size_t y) { return xa(static_cast<long>(x)) < xa(static_cast<long>(y)); });
    std::sort(b.begin(), b.end(), [&](std::size_t x, std::size_t y) { return xb(static_cast<long>(x)) < xb(static_cast<long>(y)); });
    std::vector<CouplingEntry> coupling;
    std::size_t ia = 0, ib = 0;
    double ra = mu.weight(a[0]), rb = nu.weight(b[0]);
    std::vector<double> terms;
    constexpr double tiny = 1e-15;
    while (ia < a.size() && ib < b.size()) {
        const double m = std::min(ra, rb);
        if (m > 0.0) {
            coupling.push_back({a[ia], b[ib], m});
            terms.push_back(m * cost(mu, nu, a[ia], b[ib], p));
        }
        ra -= m;
        rb -= m;
        if (ra <= tiny && ++ia < a.size()) ra = mu.weight(a[ia]);
        if (rb <= tiny && ++ib < b.size()) rb = nu.weight(b[ib]);
    }
    return finish(ordered_sum(std::move(terms)), p, true, "quantile", 0.0, std::move(coupling));
}

WassersteinResult against_dirac(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p, bool dirac_second) {
    const EmpiricalMeasure& spread = dirac_second ? mu : nu;
    std::vector<CouplingEntry> coupling;
    double total = 0.0;
    for (std::size_t i = 0; i < spread.size(); ++i) {
        const double c = dirac_second ? cost(mu, nu, i, 0, p) : cost(mu, nu, 0, i, p);
        total += spread.weight(i) * c;
        coupling.push_back(dirac_second ? CouplingEntry{i, 0, spread.weight(i)} : CouplingEntry{0, i, spread.weight(i)});
    }
    return finish(total, p, true, "dirac", 0.0, std::move(coupling));
}

// Forward auction with epsilon scaling on an N x N problem with uniform
// weights. Costs are either a dense matrix or computed on demand.
WassersteinResult auction(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p, const TransportConfig& cfg) {
    const std::size_t n = mu.size();
    const bool dense = n <= cfg.dense_cost_limit;
    // Bidders scan rows, so the dense cost is stored transposed (column i = row i).
    Mat ct;
    if (dense) ct = cost_matrix(nu, mu, p);
    auto C = [&](std::size_t i, std::size_t j) {
        return dense ? ct(static_cast<long>(j), static_cast<long>(i)) : cost(mu, nu, i, j, p);
    };
    double cmax = 0.0;
    if (dense)
        cmax = ct.maxCoeff();
    else
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) cmax = std::max(cmax, C(i, j));
    if (cmax == 0.0) {
        std::vector<CouplingEntry> cp;
        for (std::size_t i = 0; i < n; ++i) cp.push_back({i, i, 1.0 / static_cast<double>(n)});
        return finish(0.0, p, true, "auction", 0.0, std::move(cp));
    }
    const double eps_final = cfg.auction_relative_gap * cmax / static_cast<double>(n);
    std::vector<double> price(n, 0.0), row_buf(dense ? 0 : n);
    std::vector<std::size_t> owner(n), assigned(n);
    const std::size_t none = std::numeric_limits<std::size_t>::max();
    for (double eps = cmax / 4.0;; eps = std::max(eps / 5.0, eps_final)) {
        std::fill(owner.begin(), owner.end(), none);
        std::fill(assigned.begin(), assigned.end(), none);
        std::vector<std::size_t> queue(n);
        std::iota(queue.begin(), queue.end(), 0);
        while (!queue.empty()) {
            const std::size_t i = queue.back();
            queue.pop_back();
            const double* row = dense ? ct.col(static_cast<long>(i)).data() : nullptr;
            if (!dense) {
                for (std::size_t j = 0; j < n; ++j) row_buf[j] = cost(mu, nu, i, j, p);
                row = row_buf.data();
            }
            double best = -kInf, second = -kInf;
            std::size_t jbest = 0;
            for (std::size_t j = 0; j < n; ++j) {
                const double v = -row[j] - price[j];
                if (v > best) {
                    second = best;
                    best = v;
                    jbest = j;
                } else if (v > second) {
                    second = v;
                }
            }
            if (n == 1) second = best;
            price[jbest] += best - second + eps;
            if (owner[jbest] != none) {
                assigned[owner[jbest]] = none;
                queue.push_back(owner[jbest]);
            }
            owner[jbest] = i;
            assigned[i] = jbest;
        }
        if (eps <= eps_final) break;
    }
    const double w = 1.0 / static_cast<double>(n);
    double primal = 0.0, dual = 0.0;
    std::vector<CouplingEntry> cp;
    for (std::size_t i = 0; i < n; ++i) {
        primal += w * C(i, assigned[i]);
        cp.push_back({i, assigned[i], w});
        double u = kInf;
        for (std::size_t j = 0; j < n; ++j) u = std::min(u, C(i, j) + price[j]);
        dual += w * u;
    }
    for (std::size_t j = 0; j < n; ++j) dual -= w * price[j];
    const double gap = std::max(0.0, primal - dual);
    return finish(primal, p, false, "auction", gap, std::move(cp));
}

double log_sum_exp(const double* v, std::size_t n) {
    double m = -kInf;
    for (std::size_t k = 0; k < n; ++k) m = std::max(m, v[k]);
    if (m == -kInf) return -kInf;
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += std::exp(v[k] - m);
    return m + std::log(s);
}

// Log-domain Sinkhorn with epsilon scaling, followed by rounding onto the
// transport polytope.
WassersteinResult sinkhorn(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p, const TransportConfig& cfg) {
    const std::size_t n = mu.size(), m = nu.size();
    const Mat c = cost_matrix(mu, nu, p);
    const double cmax = std::max(c.maxCoeff(), 1e-300);
    const Vec& a = mu.weights();
    const Vec& b = nu.weights();
    Vec la = a.array().log(), lb = b.array().log();
    Vec f = Vec::Zero(static_cast<long>(n)), g = Vec::Zero(static_cast<long>(m));
    std::vector<double> buf(std::max(n, m));
    const double eps_target = cfg.sinkhorn_epsilon * cmax;
    auto update_f = [&](double eps) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j)
                buf[j] = lb(static_cast<long>(j)) + (g(static_cast<long>(j)) - c(static_cast<long>(i), static_cast<long>(j))) / eps;
            f(static_cast<long>(i)) = -eps * log_sum_exp(buf.data(), m);
        }
    };
    auto update_g = [&](double eps) {
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < n; ++i)
                buf[i] = la(static_cast<long>(i)) + (f(static_cast<long>(i)) - c(static_cast<long>(i), static_cast<long>(j))) / eps;
            g(static_cast<long>(j)) = -eps * log_sum_exp(buf.data(), n);
        }
    };
    auto plan = [&](double eps) {
        Mat pi(static_cast<long>(n), static_cast<long>(m));
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t i = 0; i < n; ++i) {
                const long li = static_cast<long>(i), lj = static_cast<long>(j);
                pi(li, lj) = std::exp(la(li) + lb(lj) + (f(li) + g(lj) - c(li, lj)) / eps);
            }
        return pi;
    };
    for (double eps = cmax;; eps = std::max(0.5 * eps, eps_target)) {
        for (int it = 0; it < cfg.sinkhorn_iterations; ++it) {
            update_f(eps);
            update_g(eps);
            if (it % 10 == 9 || eps == eps_target) {
                const Mat pi = plan(eps);
                if ((pi.rowwise().sum() - a).lpNorm<1>() < cfg.sinkhorn_tolerance) break;
            }
        }
        if (eps == eps_target) break;
    }
    Mat pi = plan(eps_target);
    // Rounding: scale rows and columns down, then restore the marginals with
    // a rank-one correction.
    const Vec r = pi.rowwise().sum();
    for (std::size_t i = 0; i < n; ++i) {
        const long li = static_cast<long>(i);
        if (r(li) > a(li)) pi.row(li) *= a(li) / r(li);
    }
    const Vec col = pi.colwise().sum().transpose();
    for (std::size_t j = 0; j < m; ++j) {
        const long lj = static_cast<long>(j);
        if (col(lj) > b(lj)) pi.col(lj) *= b(lj) / col(lj);
    }
    const Vec er = a - pi.rowwise().sum();
    const Vec ec = b - pi.colwise().sum().transpose();
    const double mass = er.sum();
    if (mass > 0.0) pi.noalias() += er * ec.transpose() / mass;
    const double primal = pi.cwiseProduct(c).sum();
    // Dual lower bound from the c-transform of g.
    double dual = b.dot(g);
    for (std::size_t i = 0; i < n; ++i) {
        double u = kInf;
        for (std::size_t j = 0; j < m; ++j) u = std::min(u, c(static_cast<long>(i), static_cast<long>(j)) - g(static_cast<long>(j)));
        dual += a(static_cast<long>(i)) * u;
    }
    std::vector<CouplingEntry> cp;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double v = pi(static_cast<long>(i), static_cast<long>(j));
            if (v > 0.0) cp.push_back({i, j, v});
        }
    return finish(primal, p, false, "sinkhorn", std::max(0.0, primal - dual), std::move(cp));
}

}  // namespace

std::vector<std::size_t> solve_assignment(const Mat& cost) {
    // Shortest augmenting path with row/column potentials, O(n^3).
    const std::size_t n = static_cast<std::size_t>(cost.rows());
    if (cost.cols() != cost.rows()) throw std::invalid_argument("assignment needs a square cost matrix");
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(static_cast<long>(i0 - 1), static_cast<long>(j - 1)) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

WassersteinResult wasserstein_p(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                                const TransportConfig& cfg) {
    if (!(p >= 1.0)) throw DomainError("Wasserstein order must be at least 1");
    if (mu.dim() != nu.dim()) throw DomainError("measures live in different dimensions");
    if (identical(mu, nu)) {
        std::vector<CouplingEntry> cp;
        for (std::size_t i = 0; i < mu.size(); ++i) cp.push_back({i, i, mu.weight(i)});
        return finish(0.0, p, true, "identical", 0.0, std::move(cp));
    }
    if (nu.size() == 1) return against_dirac(mu, nu, p, true);
    if (mu.size() == 1) return against_dirac(mu, nu, p, false);
    if (mu.dim() == 1) return quantile(mu, nu, p);
    if (mu.size() == nu.size() && mu.has_uniform_weights() && nu.has_uniform_weights()) {
        const std::size_t n = mu.size();
        if (n <= cfg.exact_limit) {
            const Mat c = cost_matrix(mu, nu, p);
            const auto assign = solve_assignment(c);
            const double w = 1.0 / static_cast<double>(n);
            std::vector<double> terms;
            std::vector<CouplingEntry> cp;
            for (std::size_t i = 0; i < n; ++i) {
                terms.push_back(w * c(static_cast<long>(i), static_cast<long>(assign[i])));
                cp.push_back({i, assign[i], w});
            }
            return finish(ordered_sum(std::move(terms)), p, true, "hungarian", 0.0, std::move(cp));
        }
        return auction(mu, nu, p, cfg);
    }
    return sinkhorn(mu, nu, p, cfg);
}

double wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
    return wasserstein_p(mu, nu, p).value;
}

}  // namespace mvrds

#ifndef SMBFORGE_OPTIMIZER_HPP
#define SMBFORGE_OPTIMIZER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace smbforge {

// Result of one process evaluation at a parameter vector.
struct Evaluation {
    std::vector<double> purity;  // one per epsilon-constrained node
    double yield = 0.0;
    bool css_converged = true;
    int css_switches = 0;
    bool failed = false;
};

struct OptimizationProblem {
    std::vector<double> lo, hi;  // box bounds per dimension
    std::vector<double> eps;     // purity thresholds, one per constraint
    std::vector<double> sigma_schedule{1.0, 10.0, 100.0, 1000.0, 10000.0};
    double nonconverged_penalty = 10.0;
    std::function<Evaluation(const std::vector<double>&)> evaluate;
};

// H = -Y + sigma_k * sum_j min(0, Pu_j - eps_j)^2
inline double penalty_objective(std::span<const double> purity, std::span<const double> eps,
                                double yield, double sigma_k) {
    if (!(sigma_k > 0.0)) throw std::invalid_argument("penalty factor must be > 0");
    double g = 0.0;
    for (std::size_t j = 0; j < eps.size(); ++j) {
        double c = std::min(0.0, purity[j] - eps[j]);
        g += c * c;
    }
    return -yield + sigma_k * g;
}

inline double penalty_objective(double purity, double eps, double yield, double sigma_k) {
    return penalty_objective(std::span<const double>(&purity, 1),
                             std::span<const double>(&eps, 1), yield, sigma_k);
}

// L = exp(-H/2); kept in log form everywhere internally.
inline double likelihood(double h) { return std::exp(-0.5 * h); }
inline double log_likelihood(double h) { return -0.5 * h; }

struct ChainSample {
    std::vector<double> theta;
    double objective = 0.0;  // H(theta; sigma_k)
    double log_l = 0.0;
    std::vector<double> purity;
    double yield = 0.0;
    bool accepted = false;
    int css_switches = 0;
    int iter = 0;
};

struct McmcResult {
    std::vector<ChainSample> evaluations;       // every evaluated proposal, in order
    std::vector<std::vector<double>> chain;     // current state after each iteration
    std::size_t burn_in = 0;                    // iterations flagged as burn-in
    double acceptance_rate = 0.0;
};

namespace detail {

inline void reflect_into_box(std::vector<double>& x, const std::vector<double>& lo,
                             const std::vector<double>& hi) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double w = hi[i] - lo[i];
        double r = std::fmod(x[i] - lo[i], 2.0 * w);
        if (r < 0.0) r += 2.0 * w;
        x[i] = lo[i] + (r <= w ? r : 2.0 * w - r);
    }
}

// Lower-triangular Cholesky with a diagonal jitter fallback.
inline std::vector<double> cholesky(std::vector<double> a, int d) {
    for (int i = 0; i < d; ++i) a[static_cast<std::size_t>(i) * d + i] *= 1.0 + 1e-10;
    std::vector<double> l(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j) {
            double s = a[static_cast<std::size_t>(i) * d + j];
            for (int k = 0; k < j; ++k)
                s -= l[static_cast<std::size_t>(i) * d + k] * l[static_cast<std::size_t>(j) * d + k];
            if (i == j) {
                if (s <= 0.0) return {};  // not SPD; caller keeps the old factor
                l[static_cast<std::size_t>(i) * d + j] = std::sqrt(s);
            } else {
                l[static_cast<std::size_t>(i) * d + j] = s / l[static_cast<std::size_t>(j) * d + j];
            }
        }
    return l;
}

struct ThetaKey {
    std::vector<double> v;
    bool operator<(const ThetaKey& o) const { return v < o.v; }
};

}  // namespace detail

// Random-walk Metropolis-Hastings with one delayed-rejection stage (proposal
// scale x 0.25) and covariance adaptation from the accepted history (frozen
// after burn-in). Evaluations are cached by theta, so re-proposed points are
// not re-simulated. Failed evaluations get H = +inf and never abort the chain.
inline McmcResult mcmc_sample(const OptimizationProblem& problem, std::uint64_t seed,
                              int n_samples, double burn_in_frac = 0.5) {
    if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
    const int d = static_cast<int>(problem.lo.size());
    if (problem.hi.size() != problem.lo.size()) throw std::invalid_argument("bad bounds");
    for (int i = 0; i < d; ++i)
        if (!(problem.lo[i] < problem.hi[i]))
            throw std::invalid_argument("bounds must satisfy lo < hi");
    if (problem.sigma_schedule.empty() || !(problem.sigma_schedule.front() > 0.0))
        throw std::invalid_argument("sigma schedule must start > 0");
    for (std::size_t k = 1; k < problem.sigma_schedule.size(); ++k)
        if (!(problem.sigma_schedule[k] > problem.sigma_schedule[k - 1]))
            throw std::invalid_argument("sigma schedule must be strictly increasing");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    McmcResult res;
    res.burn_in = static_cast<std::size_t>(n_samples * burn_in_frac);

    std::map<detail::ThetaKey, Evaluation> cache;
    auto eval_at = [&](const std::vector<double>& theta) -> const Evaluation& {
        auto [it, fresh] = cache.try_emplace(detail::ThetaKey{theta});
        if (fresh) {
            try {
                it->second = problem.evaluate(theta);
            } catch (const std::exception&) {
                it->second.failed = true;
            }
        }
        return it->second;
    };
    auto objective = [&](const Evaluation& e, double sigma) {
        if (e.failed) return std::numeric_limits<double>::infinity();
        double h = penalty_objective(e.purity, problem.eps, e.yield, sigma);
        if (!e.css_converged) h += problem.nonconverged_penalty;
        return h;
    };

    // initial proposal: independent Gaussian steps, 5% of the box width
    std::vector<double> chol(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i)
        chol[static_cast<std::size_t>(i) * d + i] = 0.05 * (problem.hi[i] - problem.lo[i]);

    auto propose = [&](const std::vector<double>& from, double scale) {
        std::vector<double> z(d), x = from;
        for (int i = 0; i < d; ++i) z[i] = gauss(rng);
        for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j <= i; ++j) s += chol[static_cast<std::size_t>(i) * d + j] * z[j];
            x[static_cast<std::size_t>(i)] += scale * s;
        }
        detail::reflect_into_box(x, problem.lo, problem.hi);
        return x;
    };

    std::vector<double> theta(d);
    for (int i = 0; i < d; ++i) theta[i] = 0.5 * (problem.lo[i] + problem.hi[i]);
    int sigma_idx = 0;
    const int sigma_stride = std::max(1, n_samples / static_cast<int>(problem.sigma_schedule.size()));
    double sigma = problem.sigma_schedule[0];
    double h_cur = objective(eval_at(theta), sigma);

    std::vector<std::vector<double>> accepted_hist{theta};
    long n_accept = 0;
    auto record = [&](int iter, const std::vector<double>& th, double h, bool acc) {
        const Evaluation& e = eval_at(th);
        ChainSample s;
        s.theta = th;
        s.objective = h;
        s.log_l = log_likelihood(h);
        s.purity = e.purity;
        s.yield = e.yield;
        s.accepted = acc;
        s.css_switches = e.css_switches;
        s.iter = iter;
        res.evaluations.push_back(std::move(s));
    };

    for (int iter = 0; iter < n_samples; ++iter) {
        int want_sigma = std::min(iter / sigma_stride,
                                  static_cast<int>(problem.sigma_schedule.size()) - 1);
        if (want_sigma != sigma_idx) {
            sigma_idx = want_sigma;
            sigma = problem.sigma_schedule[static_cast<std::size_t>(sigma_idx)];
            h_cur = objective(eval_at(theta), sigma);  // re-anchor under the new penalty
        }

        std::vector<double> prop1 = propose(theta, 1.0);
        double h1 = objective(eval_at(prop1), sigma);
        double log_a1 = -0.5 * (h1 - h_cur);
        if (std::log(unif(rng)) < log_a1) {
            record(iter, prop1, h1, true);
            theta = std::move(prop1);
            h_cur = h1;
            ++n_accept;
        } else {
            record(iter, prop1, h1, false);
            // delayed rejection: one shrunken stage
            std::vector<double> prop2 = propose(theta, 0.25);
            double h2 = objective(eval_at(prop2), sigma);
            // alpha(prop2 -> prop1) for the DR correction term
            double log_a12 = std::min(0.0, -0.5 * (h1 - h2));
            double log_a01 = std::min(0.0, log_a1);
            double log_num = -0.5 * (h2 - h_cur) + std::log1p(-std::min(1.0 - 1e-300, std::exp(log_a12)));
            double log_den = std::log1p(-std::min(1.0 - 1e-300, std::exp(log_a01)));
            bool acc2 = std::isfinite(h2) && std::log(unif(rng)) < (log_num - log_den);
            record(iter, prop2, h2, acc2);
            if (acc2) {
                theta = std::move(prop2);
                h_cur = h2;
                ++n_accept;
            }
        }
        res.chain.push_back(theta);
        accepted_hist.push_back(theta);

        // adapt the proposal covariance until the end of burn-in
        const std::size_t warmup = std::max<std::size_t>(20, static_cast<std::size_t>(n_samples) / 10);
        if (static_cast<std::size_t>(iter) >= warmup &&
            static_cast<std::size_t>(iter) < res.burn_in && iter % 50 == 0) {
            const std::size_t n = accepted_hist.size();
            std::vector<double> mean(d, 0.0);
            for (const auto& x : accepted_hist)
                for (int i = 0; i < d; ++i) mean[i] += x[i];
            for (int i = 0; i < d; ++i) mean[i] /= static_cast<double>(n);
            std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
            for (const auto& x : accepted_hist)
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j <= i; ++j)
                        cov[static_cast<std::size_t>(i) * d + j] +=
                            (x[i] - mean[i]) * (x[j] - mean[j]);
            const double fac = 2.38 * 2.38 / d / static_cast<double>(n - 1);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j <= i; ++j) {
                    cov[static_cast<std::size_t>(i) * d + j] *= fac;
                    cov[static_cast<std::size_t>(j) * d + i] =
                        cov[static_cast<std::size_t>(i) * d + j];
                }
            auto l = detail::cholesky(cov, d);
            if (!l.empty()) chol = std::move(l);
        }
    }
    res.acceptance_rate = static_cast<double>(n_accept) / n_samples;
    return res;
}

// Geweke convergence diagnostic: z-score between the first a-fraction and the
// last b-fraction of the chain, with spectral (autocovariance-windowed)
// variance estimates at frequency zero.
inline double geweke(std::span<const double> chain, double a = 0.1, double b = 0.5) {
    const std::size_t n = chain.size();
    if (n < 20) throw std::invalid_argument("geweke: chain too short");
    auto spectral_stats = [](std::span<const double> x) {
        const std::size_t m = x.size();
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(m);
        const std::size_t lag_max = std::min<std::size_t>(
            m - 1, static_cast<std::size_t>(std::sqrt(static_cast<double>(m))));
        double s = 0.0;
        for (std::size_t lag = 0; lag <= lag_max; ++lag) {
            double g = 0.0;
            for (std::size_t i = lag; i < m; ++i) g += (x[i] - mean) * (x[i - lag] - mean);
            g /= static_cast<double>(m);
            double w = 1.0 - static_cast<double>(lag) / static_cast<double>(lag_max + 1);
            s += (lag == 0 ? 1.0 : 2.0 * w) * g;
        }
        return std::pair{mean, std::max(s, 0.0)};
    };
    const std::size_t na = std::max<std::size_t>(2, static_cast<std::size_t>(n * a));
    const std::size_t nb = std::max<std::size_t>(2, static_cast<std::size_t>(n * b));
    auto [ma, sa] = spectral_stats(chain.subspan(0, na));
    auto [mb, sb] = spectral_stats(chain.subspan(n - nb, nb));
    const double var = sa / static_cast<double>(na) + sb / static_cast<double>(nb);
    if (var <= 0.0) {
        if (ma == mb) return 0.0;
        return std::numeric_limits<double>::infinity();
    }
    return (ma - mb) / std::sqrt(var);
}

// Non-dominated stable filter on (purity, yield), maximizing both. Returns
// the indices of the front in input order; exact duplicates keep only the
// first occurrence.
inline std::vector<std::size_t> pareto_front(std::span<const std::pair<double, double>> pts) {
    std::vector<std::size_t> front;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
            if (j == i) continue;
            const bool ge = pts[j].first >= pts[i].first && pts[j].second >= pts[i].second;
            const bool strict = pts[j].first > pts[i].first || pts[j].second > pts[i].second;
            if (ge && strict) dominated = true;
            if (j < i && pts[j] == pts[i]) dominated = true;  // stable de-duplication
        }
        if (!dominated) front.push_back(i);
    }
    return front;
}

}  // namespace smbforge

#endif

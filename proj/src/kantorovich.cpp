#include "mk/kantorovich.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>

#include "mk/errors.hpp"

namespace mk {

double TransportSolution::slackness_defect() const {
    double d = 0.0;
    for (const auto& e : plan) d = std::max(d, std::fabs(cost(e.source, e.target) + dual_u[e.source] + dual_v[e.target]));
    return d;
}

double TransportSolution::feasibility_defect() const {
    double d = 0.0;
    for (Eigen::Index j = 0; j < cost.cols(); ++j)
        for (Eigen::Index i = 0; i < cost.rows(); ++i) d = std::max(d, -(cost(i, j) + dual_u[i] + dual_v[j]));
    return d;
}

double TransportSolution::relative_gap() const { return gap / (1.0 + std::fabs(primal_cost)); }

Eigen::VectorXd TransportSolution::row_sums() const {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(cost.rows());
    for (const auto& e : plan) r[e.source] += e.mass;
    return r;
}

Eigen::VectorXd TransportSolution::column_sums() const {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(cost.cols());
    for (const auto& e : plan) r[e.target] += e.mass;
    return r;
}

namespace {

void check_pair_charts(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostFunction& c) {
    if (mu.chart() != nu.chart() || mu.atom(0).ambient_dim() != nu.atom(0).ambient_dim())
        throw ValidationError("measures live on incompatible charts");
    if (!c.accepts(mu.chart())) throw DomainError("cost " + c.spec() + " is not defined on chart " + to_string(mu.chart()));
}

double pair_cost(const CostFunction& c, const Point& x, const Point& y) {
    check_admissible(c, x.chart, x.coords.data(), y.coords.data(), x.ambient_dim());
    return cost_kernel<double>(c, x.chart, x.coords.data(), y.coords.data(), x.ambient_dim());
}

}  // namespace

Eigen::MatrixXd cost_matrix_serial(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostFunction& c) {
    check_pair_charts(mu, nu, c);
    Eigen::MatrixXd C(mu.size(), nu.size());
    for (std::size_t i = 0; i < mu.size(); ++i)
        for (std::size_t j = 0; j < nu.size(); ++j) C(i, j) = pair_cost(c, mu.atom(i), nu.atom(j));
    return C;
}

Eigen::MatrixXd cost_matrix(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostFunction& c) {
    check_pair_charts(mu, nu, c);
    const long m = static_cast<long>(mu.size()), n = static_cast<long>(nu.size());
    Eigen::MatrixXd C(m, n);
    std::atomic<bool> bad{false};
#pragma omp parallel for schedule(static)
    for (long i = 0; i < m; ++i) {
        for (long j = 0; j < n; ++j) {
            const Point& x = mu.atom(i);
            const Point& y = nu.atom(j);
            try {
                C(i, j) = pair_cost(c, x, y);
            } catch (const DomainError&) {
                bad = true;
            }
        }
    }
    if (bad) return cost_matrix_serial(mu, nu, c);  // rethrows the first failure deterministically
    return C;
}

namespace {

class TransportSimplex {
public:
    TransportSimplex(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& C)
        : m_(static_cast<int>(a.size())), n_(static_cast<int>(b.size())), a_(a), b_(b), C_(C) {
        tol_ = 1e-12 * (1.0 + C.cwiseAbs().maxCoeff());
        northwest_corner();
    }

    void run() {
        const long cap = 10000L + 100L * static_cast<long>(m_) * n_;
        int degenerate_streak = 0;
        for (;;) {
            build_tree();
            int ei = -1, ej = -1;
            bool bland = degenerate_streak >= 50;
            if (!price(bland, ei, ej)) {
                recompute_flows();
                build_tree();
                if (!price(true, ei, ej)) break;
            }
            if (++iterations_ > cap) throw NumericalError("network simplex exceeded its pivot limit");
            bool degenerate = pivot(ei, ej, bland);
            if (degenerate) {
                ++degenerate_pivots_;
                ++degenerate_streak;
            } else {
                degenerate_streak = 0;
            }
        }
    }

    TransportSolution solution() const {
        TransportSolution s;
        s.dual_u.resize(m_);
        s.dual_v.resize(n_);
        for (int i = 0; i < m_; ++i) s.dual_u[i] = -alpha_[i];
        for (int j = 0; j < n_; ++j) s.dual_v[j] = -beta_[j];
        std::vector<int> order(ai_.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int p, int q) {
            return ai_[p] != ai_[q] ? ai_[p] < ai_[q] : aj_[p] < aj_[q];
        });
        for (int k : order)
            if (flow_[k] > 0.0) s.plan.push_back({ai_[k], aj_[k], flow_[k]});
        s.iterations = iterations_;
        s.degenerate_pivots = degenerate_pivots_;
        return s;
    }

private:
    int node_of_col(int j) const { return m_ + j; }

    void add_arc(int i, int j, double f) {
        int id = static_cast<int>(ai_.size());
        ai_.push_back(i);
        aj_.push_back(j);
        flow_.push_back(f);
        adj_[i].push_back(id);
        adj_[node_of_col(j)].push_back(id);
    }

    void northwest_corner() {
        adj_.assign(m_ + n_, {});
        std::vector<double> ra(a_.data(), a_.data() + m_), rb(b_.data(), b_.data() + n_);
        int i = 0, j = 0;
        while (i < m_ && j < n_) {
            double x = std::min(ra[i], rb[j]);
            add_arc(i, j, x);
            ra[i] -= x;
            rb[j] -= x;
            if (i == m_ - 1) ++j;
            else if (j == n_ - 1) ++i;
            else if (ra[i] <= rb[j]) ++i;
            else ++j;
        }
    }

    void build_tree() {
        const int N = m_ + n_;
        parent_.assign(N, -1);
        parent_arc_.assign(N, -1);
        depth_.assign(N, -1);
        alpha_.assign(m_, 0.0);
        beta_.assign(n_, 0.0);
        queue_.clear();
        queue_.push_back(0);
        depth_[0] = 0;
        for (std::size_t h = 0; h < queue_.size(); ++h) {
            int v = queue_[h];
            for (int e : adj_[v]) {
                int i = ai_[e], j = aj_[e];
                int w = v < m_ ? node_of_col(j) : i;
                if (depth_[w] >= 0) continue;
                depth_[w] = depth_[v] + 1;
                parent_[w] = v;
                parent_arc_[w] = e;
                if (v < m_) beta_[j] = C_(i, j) - alpha_[i];
                else alpha_[i] = C_(i, j) - beta_[j];
                queue_.push_back(w);
            }
        }
        if (static_cast<int>(queue_.size()) != N) throw NumericalError("simplex basis is not a spanning tree");
    }

    bool price(bool bland, int& ei, int& ej) const {
        if (bland) {
            for (int i = 0; i < m_; ++i)
                for (int j = 0; j < n_; ++j)
                    if (C_(i, j) - alpha_[i] - beta_[j] < -tol_) {
                        ei = i;
                        ej = j;
                        return true;
                    }
            return false;
        }
        double best = -tol_;
        bool found = false;
        for (int j = 0; j < n_; ++j) {
            const double bj = beta_[j];
            for (int i = 0; i < m_; ++i) {
                double r = C_(i, j) - alpha_[i] - bj;
                if (r < best) {
                    best = r;
                    ei = i;
                    ej = j;
                    found = true;
                }
            }
        }
        return found;
    }

    bool pivot(int ei, int ej, bool bland) {
        jside_.clear();
        iside_.clear();
        int u = node_of_col(ej), w = ei;
        while (u != w) {
            if (depth_[u] >= depth_[w]) {
                jside_.push_back(parent_arc_[u]);
                u = parent_[u];
            } else {
                iside_.push_back(parent_arc_[w]);
                w = parent_[w];
            }
        }
        cycle_.assign(jside_.begin(), jside_.end());
        cycle_.insert(cycle_.end(), iside_.rbegin(), iside_.rend());
        double theta = std::numeric_limits<double>::infinity();
        int leave = -1;
        for (std::size_t k = 0; k < cycle_.size(); k += 2) {
            int e = cycle_[k];
            double f = flow_[e];
            if (f < theta) {
                theta = f;
                leave = e;
            } else if (bland && f == theta) {
                long key_e = static_cast<long>(ai_[e]) * n_ + aj_[e];
                long key_l = static_cast<long>(ai_[leave]) * n_ + aj_[leave];
                if (key_e < key_l) leave = e;
            }
        }
        theta = std::max(theta, 0.0);
        for (std::size_t k = 0; k < cycle_.size(); ++k) {
            int e = cycle_[k];
            flow_[e] = (k % 2 == 0) ? std::max(flow_[e] - theta, 0.0) : flow_[e] + theta;
        }
        auto drop = [&](int node, int e) {
            auto& v = adj_[node];
            v.erase(std::find(v.begin(), v.end(), e));
        };
        drop(ai_[leave], leave);
        drop(node_of_col(aj_[leave]), leave);
        ai_[leave] = ei;
        aj_[leave] = ej;
        flow_[leave] = theta;
        adj_[ei].push_back(leave);
        adj_[node_of_col(ej)].push_back(leave);
        return theta <= 0.0;
    }

    // Exact flows of the current basis by peeling leaves of the tree.
    void recompute_flows() {
        const int N = m_ + n_;
        std::vector<double> rem(N);
        for (int i = 0; i < m_; ++i) rem[i] = a_[i];
        for (int j = 0; j < n_; ++j) rem[node_of_col(j)] = b_[j];
        std::vector<int> deg(N);
        std::vector<char> used(ai_.size(), 0);
        std::vector<int> stack;
        for (int v = 0; v < N; ++v) {
            deg[v] = static_cast<int>(adj_[v].size());
            if (deg[v] == 1) stack.push_back(v);
        }
        double scale = std::max(a_.sum(), 1e-300);
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            if (deg[v] != 1) continue;
            int e = -1;
            for (int f : adj_[v])
                if (!used[f]) {
                    e = f;
                    break;
                }
            used[e] = 1;
            int other = v < m_ ? node_of_col(aj_[e]) : ai_[e];
            double f = rem[v];
            if (f < -1e-9 * scale) throw NumericalError("simplex basis lost primal feasibility");
            f = std::max(f, 0.0);
            flow_[e] = f;
            rem[other] -= rem[v];
            rem[v] = 0.0;
            --deg[v];
            if (--deg[other] == 1) stack.push_back(other);
        }
    }

    int m_, n_;
    const Eigen::VectorXd& a_;
    const Eigen::VectorXd& b_;
    const Eigen::MatrixXd& C_;
    double tol_ = 0.0;
    std::vector<int> ai_, aj_;
    std::vector<double> flow_;
    std::vector<std::vector<int>> adj_;
    std::vector<int> parent_, parent_arc_, depth_, queue_;
    std::vector<double> alpha_, beta_;
    std::vector<int> jside_, iside_, cycle_;
    long iterations_ = 0;
    long degenerate_pivots_ = 0;
};

}  // namespace

TransportSolution solve_transport(const Eigen::VectorXd& supply, const Eigen::VectorXd& demand,
                                  const Eigen::MatrixXd& cost) {
    const Eigen::Index m = supply.size(), n = demand.size();
    if (m < 1 || n < 1) throw ValidationError("transport problem needs at least one source and one target");
    if (cost.rows() != m || cost.cols() != n) throw ValidationError("cost matrix shape mismatch");
    if (!cost.allFinite()) throw ValidationError("cost matrix has non-finite entries");
    if ((supply.array() < 0.0).any() || (demand.array() < 0.0).any()) throw ValidationError("negative mass");
    const double sa = supply.sum(), sb = demand.sum();
    if (std::fabs(sa - sb) > 1e-9) throw InfeasibleError("supply and demand totals differ");
    if (!(sa > 0.0)) throw InfeasibleError("transport problem has zero mass");

    std::vector<int> rows, cols;
    TransportSolution out;
    for (Eigen::Index i = 0; i < m; ++i) (supply[i] > 0.0 ? rows : out.dropped_sources).push_back(static_cast<int>(i));
    for (Eigen::Index j = 0; j < n; ++j) (demand[j] > 0.0 ? cols : out.dropped_targets).push_back(static_cast<int>(j));

    Eigen::VectorXd a(rows.size()), b(cols.size());
    Eigen::MatrixXd C(rows.size(), cols.size());
    for (std::size_t r = 0; r < rows.size(); ++r) a[r] = supply[rows[r]];
    for (std::size_t s = 0; s < cols.size(); ++s) b[s] = demand[cols[s]];
    b *= a.sum() / b.sum();
    for (std::size_t s = 0; s < cols.size(); ++s)
        for (std::size_t r = 0; r < rows.size(); ++r) C(r, s) = cost(rows[r], cols[s]);

    TransportSimplex simplex(a, b, C);
    simplex.run();
    TransportSolution sub = simplex.solution();

    out.cost = cost;
    out.iterations = sub.iterations;
    out.degenerate_pivots = sub.degenerate_pivots;
    out.dual_u = Eigen::VectorXd::Zero(m);
    out.dual_v = Eigen::VectorXd::Zero(n);
    for (std::size_t r = 0; r < rows.size(); ++r) out.dual_u[rows[r]] = sub.dual_u[r];
    for (std::size_t s = 0; s < cols.size(); ++s) out.dual_v[cols[s]] = sub.dual_v[s];
    // dropped atoms get the smallest feasible potential (a c-transform)
    for (int i : out.dropped_sources) {
        double best = -std::numeric_limits<double>::infinity();
        for (int j : cols) best = std::max(best, -cost(i, j) - out.dual_v[j]);
        out.dual_u[i] = best;
    }
    for (int j : out.dropped_targets) {
        double best = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < m; ++i) best = std::max(best, -cost(i, j) - out.dual_u[i]);
        out.dual_v[j] = best;
    }
    for (const auto& e : sub.plan) out.plan.push_back({rows[e.source], cols[e.target], e.mass});

    out.primal_cost = 0.0;
    for (const auto& e : out.plan) out.primal_cost += e.mass * cost(e.source, e.target);
    out.dual_value = -(out.dual_u.dot(supply) + out.dual_v.dot(demand));
    out.gap = out.primal_cost - out.dual_value;
    return out;
}

TransportSolution solve_plan(const DiscreteMeasure& mu_plus, const DiscreteMeasure& mu_minus, const CostFunction& c) {
    Eigen::MatrixXd C = cost_matrix(mu_plus, mu_minus, c);
    Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(mu_plus.weights().data(), mu_plus.size());
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(mu_minus.weights().data(), mu_minus.size());
    return solve_transport(a, b, C);
}

double wasserstein_p(const DiscreteMeasure& mu_plus, const DiscreteMeasure& mu_minus, double p) {
    if (!(p > 0.0)) throw ValidationError("Wasserstein exponent must be positive");
    CostFunction c(CostKind::power_distance, p);
    double w = std::max(solve_plan(mu_plus, mu_minus, c).primal_cost, 0.0);
    return p >= 1.0 ? std::pow(w, 1.0 / p) : w;
}

// ---------------------------------------------------------------------------
// cyclical monotonicity

Eigen::MatrixXd support_pair_cost(const TransportSolution& sol) {
    const std::size_t s = sol.plan.size();
    Eigen::MatrixXd K(s, s);
    for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = 0; b < s; ++b) K(a, b) = sol.cost(sol.plan[a].source, sol.plan[b].target);
    return K;
}

Eigen::MatrixXd support_pair_cost(std::span<const Point> xs, std::span<const Point> ys, const CostFunction& c) {
    if (xs.size() != ys.size()) throw ValidationError("support lists differ in length");
    const std::size_t s = xs.size();
    Eigen::MatrixXd K(s, s);
    for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = 0; b < s; ++b) K(a, b) = cost_eval(c, xs[a], ys[b]);
    return K;
}

namespace {

double binomial(std::size_t s, int k) {
    if (k < 0 || static_cast<std::size_t>(k) > s) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * static_cast<double>(s - k + i) / i;
    return std::round(r);
}

std::vector<std::vector<int>> nonidentity_perms(int k) {
    std::vector<int> p(k);
    std::iota(p.begin(), p.end(), 0);
    std::vector<std::vector<int>> out;
    while (std::next_permutation(p.begin(), p.end())) out.push_back(p);
    return out;
}

struct Best {
    double value = -std::numeric_limits<double>::infinity();
    std::vector<int> subset;
    std::vector<int> perm;
    std::uint64_t violations = 0;
    std::uint64_t cycles = 0;
    std::uint64_t subsets = 0;
};

// Strictly greater wins; ties keep the earlier candidate, so merging blocks in
// index order reproduces the serial scan.
void consider(Best& best, const Eigen::MatrixXd& K, const std::vector<int>& sub, const std::vector<std::vector<int>>& perms,
              double tol) {
    const int k = static_cast<int>(sub.size());
    double diag = 0.0;
    for (int i = 0; i < k; ++i) diag += K(sub[i], sub[i]);
    ++best.subsets;
    for (const auto& p : perms) {
        double off = 0.0;
        for (int i = 0; i < k; ++i) off += K(sub[i], sub[p[i]]);
        double v = diag - off;
        ++best.cycles;
        if (v > tol) ++best.violations;
        if (v > best.value) {
            best.value = v;
            best.subset = sub;
            best.perm = p;
        }
    }
}

void merge(Best& into, const Best& b) {
    into.violations += b.violations;
    into.cycles += b.cycles;
    into.subsets += b.subsets;
    if (b.value > into.value) {
        into.value = b.value;
        into.subset = b.subset;
        into.perm = b.perm;
    }
}

// All k-subsets whose smallest element is `first`, in lexicographic order.
template <class F>
void for_each_subset_from(std::size_t s, int k, int first, F&& f) {
    std::vector<int> sub(k);
    sub[0] = first;
    if (k == 1) {
        f(sub);
        return;
    }
    if (static_cast<std::size_t>(first + k) > s) return;
    for (int i = 1; i < k; ++i) sub[i] = first + i;
    for (;;) {
        f(sub);
        int i = k - 1;
        while (i >= 1 && sub[i] == static_cast<int>(s) - k + i) --i;
        if (i < 1) return;
        ++sub[i];
        for (int t = i + 1; t < k; ++t) sub[t] = sub[t - 1] + 1;
    }
}

std::vector<std::vector<int>> perms_for(int k, std::mt19937_64& rng) {
    if (k <= 6) return nonidentity_perms(k);
    std::vector<std::vector<int>> out;
    for (int shift = 1; shift < k; ++shift) {
        std::vector<int> p(k);
        for (int i = 0; i < k; ++i) p[i] = (i + shift) % k;
        out.push_back(p);
    }
    for (int r = 0; r < 10; ++r) {
        std::vector<int> p(k);
        std::iota(p.begin(), p.end(), 0);
        std::shuffle(p.begin(), p.end(), rng);
        out.push_back(p);
    }
    return out;
}

std::vector<std::vector<int>> random_subsets(std::size_t s, int k, std::uint64_t count, std::mt19937_64& rng) {
    std::vector<std::vector<int>> out;
    out.reserve(count);
    std::vector<int> pool(s);
    for (std::uint64_t t = 0; t < count; ++t) {
        std::iota(pool.begin(), pool.end(), 0);
        for (int i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> d(i, s - 1);
            std::swap(pool[i], pool[d(rng)]);
        }
        std::vector<int> sub(pool.begin(), pool.begin() + k);
        std::sort(sub.begin(), sub.end());
        out.push_back(std::move(sub));
    }
    return out;
}

CycleReport finish(const Best& best, const CycleOptions& opt, std::vector<bool> exhaustive) {
    CycleReport r;
    r.subsets_checked = best.subsets;
    r.cycles_checked = best.cycles;
    r.violations = best.violations;
    r.exhaustive = std::move(exhaustive);
    r.worst_violation = best.cycles ? best.value : 0.0;
    r.witness = best.subset;
    r.witness_perm = best.perm;
    r.passed = best.violations == 0;
    r.seed = opt.seed;
    return r;
}

CycleReport cycle_check(const Eigen::MatrixXd& K, const CycleOptions& opt, bool parallel) {
    if (opt.k_max < 2) throw ValidationError("k_max must be at least 2");
    const std::size_t s = static_cast<std::size_t>(K.rows());
    Best total;
    std::vector<bool> exhaustive;
    std::mt19937_64 rng(opt.seed);
    for (int k = 2; k <= opt.k_max; ++k) {
        if (static_cast<std::size_t>(k) > s) {
            exhaustive.push_back(true);
            continue;
        }
        const auto perms = perms_for(k, rng);
        const bool exact = binomial(s, k) <= static_cast<double>(opt.exhaustive_cap);
        exhaustive.push_back(exact);
        if (exact) {
            const long blocks = static_cast<long>(s);
            std::vector<Best> part(blocks);
            if (parallel) {
#pragma omp parallel for schedule(dynamic, 1)
                for (long first = 0; first < blocks; ++first)
                    for_each_subset_from(s, k, static_cast<int>(first),
                                         [&](const std::vector<int>& sub) { consider(part[first], K, sub, perms, opt.tol); });
                for (const auto& p : part) merge(total, p);
            } else {
                for (long first = 0; first < blocks; ++first)
                    for_each_subset_from(s, k, static_cast<int>(first),
                                         [&](const std::vector<int>& sub) { consider(total, K, sub, perms, opt.tol); });
            }
        } else {
            const auto subsets = random_subsets(s, k, opt.trials, rng);
            const long count = static_cast<long>(subsets.size());
            if (parallel) {
                const long nb = static_cast<long>(block_count(subsets.size()));
                std::vector<Best> part(nb);
#pragma omp parallel for schedule(dynamic, 1)
                for (long b = 0; b < nb; ++b) {
                    long end = std::min(count, (b + 1) * static_cast<long>(kReductionBlock));
                    for (long t = b * static_cast<long>(kReductionBlock); t < end; ++t)
                        consider(part[b], K, subsets[t], perms, opt.tol);
                }
                for (const auto& p : part) merge(total, p);
            } else {
                for (long t = 0; t < count; ++t) consider(total, K, subsets[t], perms, opt.tol);
            }
        }
    }
    return finish(total, opt, std::move(exhaustive));
}

}  // namespace

CycleReport check_cyclical_monotonicity(const Eigen::MatrixXd& pair_cost, const CycleOptions& opt) {
    return cycle_check(pair_cost, opt, true);
}

CycleReport check_cyclical_monotonicity_serial(const Eigen::MatrixXd& pair_cost, const CycleOptions& opt) {
    return cycle_check(pair_cost, opt, false);
}

CycleReport check_cyclical_monotonicity(const TransportSolution& sol, const CycleOptions& opt) {
    return check_cyclical_monotonicity(support_pair_cost(sol), opt);
}

// ---------------------------------------------------------------------------
// two-point spacelike check

SpacelikeReport minty_spacelike_check(std::span<const Point> xs, std::span<const Point> ys, const CostFunction& c,
                                      double tol) {
    if (xs.size() != ys.size()) throw ValidationError("support lists differ in length");
    const std::size_t s = xs.size();
    if (s > 0 && xs[0].dim() != ys[0].dim()) throw ValidationError("spacelike check needs equal dimensions");
    Eigen::MatrixXd K = support_pair_cost(xs, ys, c);
    SpacelikeReport r;
    const bool bil = c.kind == CostKind::bilinear;
    if (bil) {
        r.min_inner = std::numeric_limits<double>::infinity();
        r.worst_lipschitz_excess = -std::numeric_limits<double>::infinity();
    }
    for (std::size_t a = 0; a < s; ++a) {
        for (std::size_t b = a + 1; b < s; ++b) {
            ++r.pairs;
            double excess = K(a, a) + K(b, b) - K(a, b) - K(b, a);
            if (excess > r.worst_excess) {
                r.worst_excess = excess;
                r.witness_a = static_cast<int>(a);
                r.witness_b = static_cast<int>(b);
            }
            if (bil) {
                Eigen::VectorXd dx = xs[b].coords - xs[a].coords, dy = ys[b].coords - ys[a].coords;
                r.min_inner = std::min(r.min_inner, dx.dot(dy));
                Eigen::VectorXd dz = (dx + dy) / std::sqrt(2.0), dw = (dx - dy) / std::sqrt(2.0);
                r.worst_lipschitz_excess = std::max(r.worst_lipschitz_excess, dw.norm() - dz.norm());
            }
        }
    }
    if (r.pairs == 0) {
        r.worst_excess = 0.0;
        if (bil) {
            r.min_inner = 0.0;
            r.worst_lipschitz_excess = 0.0;
        }
    }
    r.passed = r.worst_excess <= tol && (!bil || r.worst_lipschitz_excess <= tol);
    return r;
}

SpacelikeReport minty_spacelike_check(const TransportSolution& sol, const DiscreteMeasure& mu,
                                      const DiscreteMeasure& nu, const CostFunction& c, double tol) {
    std::vector<Point> xs, ys;
    for (const auto& e : sol.plan) {
        xs.push_back(mu.atom(e.source));
        ys.push_back(nu.atom(e.target));
    }
    return minty_spacelike_check(xs, ys, c, tol);
}

}  // namespace mk

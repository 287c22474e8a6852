#include "ergolab/fbar.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <unordered_map>

namespace ergolab {

namespace {

std::uint64_t low_bits_mask(std::size_t count) {
    return count >= 64 ? ~0ull : ((1ull << count) - 1ull);
}

}  // namespace

std::size_t lcs_length(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    const std::size_t n = a.size();
    if (n == 0 || b.empty()) return 0;
    const std::size_t words = (n + 63) / 64;

    // Match masks over positions of a, built only for symbols that occur.
    std::unordered_map<std::uint32_t, std::vector<std::uint64_t>> match;
    for (std::size_t i = 0; i < n; ++i) {
        auto& mask = match.try_emplace(a[i], words, 0ull).first->second;
        mask[i >> 6] |= 1ull << (i & 63);
    }
    std::vector<std::uint64_t> zero(words, 0ull);
    std::vector<std::uint64_t> v(words, ~0ull);
    for (std::uint32_t c : b) {
        auto it = match.find(c);
        const std::vector<std::uint64_t>& m = (it == match.end()) ? zero : it->second;
        std::uint64_t carry = 0;
        for (std::size_t w = 0; w < words; ++w) {
            const std::uint64_t vw = v[w];
            const std::uint64_t u = vw & m[w];
            const std::uint64_t t = vw + u;
            const std::uint64_t s = t + carry;
            carry = static_cast<std::uint64_t>((t < vw) | (carry & static_cast<std::uint64_t>(s < t)));
            v[w] = s | (vw & ~m[w]);
        }
    }

    // Cleared bits in the low n positions count matched symbols.
    std::size_t lcs = 0;
    for (std::size_t w = 0; w < words; ++w) {
        std::uint64_t live = (w + 1 == words) ? low_bits_mask(n - 64 * w) : ~0ull;
        lcs += static_cast<std::size_t>(std::popcount(~v[w] & live));
    }
    return lcs;
}

std::size_t lcs_length_naive(const std::vector<std::uint32_t>& a,
                             const std::vector<std::uint32_t>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double edit_distance_n(const Word& a, const Word& b) {
    if (!(a.alphabet == b.alphabet)) throw invalid_input("edit_distance_n: alphabet mismatch");
    if (a.length() != b.length()) throw invalid_input("edit_distance_n: unequal lengths");
    if (a.length() == 0) throw invalid_input("edit_distance_n: empty words");
    const double n = static_cast<double>(a.length());
    return 1.0 - static_cast<double>(lcs_length(a.symbols, b.symbols)) / n;
}

std::string to_json(const FbarEstimate& e) {
    nlohmann::json j;
    j["value"] = e.value;
    switch (e.kind) {
        case EstimateKind::exact: j["kind"] = "exact"; break;
        case EstimateKind::upper_bound: j["kind"] = "upper-bound"; break;
        case EstimateKind::lower_bound: j["kind"] = "lower-bound"; break;
    }
    j["n"] = e.n;
    j["samples"] = e.samples;
    j["std_error"] = e.std_error;
    return j.dump();
}

SequenceFbar fbar_sequences(const SymbolStream& a, const SymbolStream& b, Alphabet alphabet,
                            std::vector<std::uint32_t> half_width_schedule) {
    if (half_width_schedule.empty()) {
        for (std::uint32_t n = 16; n <= 65536; n *= 2) half_width_schedule.push_back(n);
    }
    std::sort(half_width_schedule.begin(), half_width_schedule.end());

    auto read_window = [&](const SymbolStream& s, std::uint32_t n,
                           std::vector<std::uint32_t>& out) -> bool {
        out.clear();
        out.reserve(2 * static_cast<std::size_t>(n));
        for (std::int64_t i = -static_cast<std::int64_t>(n); i < static_cast<std::int64_t>(n); ++i) {
            auto sym = s(i);
            if (!sym) return false;
            if (*sym >= alphabet.size) throw invalid_input("fbar_sequences: symbol out of range");
            out.push_back(*sym);
        }
        return true;
    };

    SequenceFbar result;
    std::vector<std::uint32_t> wa, wb;
    for (std::uint32_t n : half_width_schedule) {
        if (!read_window(a, n, wa) || !read_window(b, n, wb)) break;
        const double value =
            1.0 - static_cast<double>(lcs_length(wa, wb)) / static_cast<double>(2 * n);
        result.windows.push_back({n, value});
    }
    if (result.windows.empty())
        throw insufficient_data("fbar_sequences: streams end before the smallest window");

    const std::size_t count = result.windows.size();
    const std::size_t tail_start = count / 2;
    double tail_max = 0.0;
    for (std::size_t i = tail_start; i < count; ++i)
        tail_max = std::max(tail_max, result.windows[i].value);
    result.estimate.value = tail_max;
    result.estimate.kind = EstimateKind::upper_bound;
    result.estimate.n = 2 * result.windows.back().half_width;
    result.estimate.samples = 0;
    result.estimate.std_error = 0.0;
    return result;
}

JoiningProblem::JoiningProblem(const BlockDistribution& l, const BlockDistribution& r)
    : n(l.block_length), alphabet(l.alphabet) {
    if (!(l.alphabet == r.alphabet)) throw invalid_input("joining: alphabet mismatch");
    if (l.block_length != r.block_length) throw invalid_input("joining: block length mismatch");
    double sl = 0.0, sr = 0.0;
    for (auto& [word, prob] : l.freq) {
        if (word.size() != n) throw invalid_input("joining: left support word of wrong length");
        if (prob < 0.0) throw invalid_input("joining: negative left mass");
        if (prob > 0.0) left.emplace_back(word, prob);
        sl += prob;
    }
    for (auto& [word, prob] : r.freq) {
        if (word.size() != n) throw invalid_input("joining: right support word of wrong length");
        if (prob < 0.0) throw invalid_input("joining: negative right mass");
        if (prob > 0.0) right.emplace_back(word, prob);
        sr += prob;
    }
    if (std::abs(sl - 1.0) > 1e-9 || std::abs(sr - 1.0) > 1e-9)
        throw invalid_input("joining: marginals must sum to 1 within 1e-9");
}

namespace {

// Transportation simplex over integer costs. Duals and reduced costs are
// integers throughout, so the optimality test is exact; flows are reals.
class TransportSimplex {
  public:
    TransportSimplex(std::vector<double> supply, std::vector<double> demand,
                     std::vector<std::int32_t> cost)
        : m_(supply.size()), n_(demand.size()), supply_(std::move(supply)),
          demand_(std::move(demand)), cost_(std::move(cost)) {
        // Scale demand so both sides sum to the same total; residue from the
        // inputs is at most ~1e-9 and is absorbed here.
        double sa = 0.0, sb = 0.0;
        for (double x : supply_) sa += x;
        for (double x : demand_) sb += x;
        const double scale = sa / sb;
        for (double& x : demand_) x *= scale;
        flow_.assign(m_ * n_, 0.0);
        basic_.assign(m_ * n_, false);
        build_northwest_basis();
    }

    double solve() {
        const std::size_t stall_window = m_ + n_ + 16;
        std::size_t since_progress = 0;
        bool bland = false;
        double best = objective();
        while (true) {
            compute_duals();
            auto entering = price(bland);
            if (!entering) break;
            pivot(entering->first, entering->second);
            const double obj = objective();
            if (obj < best - 1e-15) {
                best = obj;
                since_progress = 0;
            } else if (++since_progress > stall_window) {
                bland = true;  // degenerate plateau; Bland's rule guarantees exit
            }
        }
        return objective();
    }

  private:
    std::size_t m_, n_;
    std::vector<double> supply_, demand_;
    std::vector<std::int32_t> cost_;
    std::vector<double> flow_;
    std::vector<char> basic_;
    std::vector<std::int64_t> dual_u_, dual_v_;

    std::size_t idx(std::size_t i, std::size_t j) const { return i * n_ + j; }

    double objective() const {
        double total = 0.0;
        for (std::size_t k = 0; k < flow_.size(); ++k)
            if (basic_[k]) total += flow_[k] * static_cast<double>(cost_[k]);
        return total;
    }

    void build_northwest_basis() {
        std::vector<double> a = supply_, b = demand_;
        std::size_t i = 0, j = 0;
        while (true) {
            const double f = std::min(a[i], b[j]);
            basic_[idx(i, j)] = true;
            flow_[idx(i, j)] = f;
            a[i] -= f;
            b[j] -= f;
            if (i + 1 == m_ && j + 1 == n_) break;
            if (j + 1 == n_) ++i;
            else if (i + 1 == m_) ++j;
            else if (a[i] <= 0.0) ++i;
            else ++j;
        }
    }

    void compute_duals() {
        dual_u_.assign(m_, std::numeric_limits<std::int64_t>::min());
        dual_v_.assign(n_, std::numeric_limits<std::int64_t>::min());
        // Adjacency over basic cells.
        std::vector<std::vector<std::uint32_t>> row_cells(m_), col_cells(n_);
        for (std::size_t i = 0; i < m_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
                if (basic_[idx(i, j)]) {
                    row_cells[i].push_back(static_cast<std::uint32_t>(j));
                    col_cells[j].push_back(static_cast<std::uint32_t>(i));
                }
        dual_u_[0] = 0;
        std::vector<std::uint32_t> stack = {0};  // nodes: rows 0..m-1, cols m..m+n-1
        while (!stack.empty()) {
            const std::uint32_t node = stack.back();
            stack.pop_back();
            if (node < m_) {
                for (std::uint32_t j : row_cells[node])
                    if (dual_v_[j] == std::numeric_limits<std::int64_t>::min()) {
                        dual_v_[j] = cost_[idx(node, j)] - dual_u_[node];
                        stack.push_back(static_cast<std::uint32_t>(m_ + j));
                    }
            } else {
                const std::uint32_t j = node - static_cast<std::uint32_t>(m_);
                for (std::uint32_t i : col_cells[j])
                    if (dual_u_[i] == std::numeric_limits<std::int64_t>::min()) {
                        dual_u_[i] = cost_[idx(i, j)] - dual_v_[j];
                        stack.push_back(i);
                    }
            }
        }
    }

    std::optional<std::pair<std::size_t, std::size_t>> price(bool bland) const {
        std::optional<std::pair<std::size_t, std::size_t>> pick;
        std::int64_t best_rc = 0;
        for (std::size_t i = 0; i < m_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) {
                if (basic_[idx(i, j)]) continue;
                const std::int64_t rc = cost_[idx(i, j)] - dual_u_[i] - dual_v_[j];
                if (rc < best_rc) {
                    best_rc = rc;
                    pick = {i, j};
                    if (bland) return pick;  // first improving cell in scan order
                }
            }
        }
        return pick;
    }

    void pivot(std::size_t ei, std::size_t ej) {
        // Locate the tree path from row ei to column ej through basic cells.
        std::vector<std::vector<std::uint32_t>> row_cells(m_), col_cells(n_);
        for (std::size_t i = 0; i < m_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
                if (basic_[idx(i, j)]) {
                    row_cells[i].push_back(static_cast<std::uint32_t>(j));
                    col_cells[j].push_back(static_cast<std::uint32_t>(i));
                }
        const std::uint32_t total = static_cast<std::uint32_t>(m_ + n_);
        std::vector<std::uint32_t> parent(total, total);
        std::vector<char> seen(total, 0);
        std::vector<std::uint32_t> stack = {static_cast<std::uint32_t>(ei)};
        seen[ei] = 1;
        while (!stack.empty()) {
            const std::uint32_t node = stack.back();
            stack.pop_back();
            if (node < m_) {
                for (std::uint32_t j : row_cells[node]) {
                    const std::uint32_t next = static_cast<std::uint32_t>(m_ + j);
                    if (!seen[next]) {
                        seen[next] = 1;
                        parent[next] = node;
                        stack.push_back(next);
                    }
                }
            } else {
                for (std::uint32_t i : col_cells[node - m_])
                    if (!seen[i]) {
                        seen[i] = 1;
                        parent[i] = node;
                        stack.push_back(i);
                    }
            }
        }

        // Cycle cells alternate +/- starting from the entering cell (+).
        std::vector<std::pair<std::size_t, std::size_t>> minus_cells, plus_cells;
        plus_cells.emplace_back(ei, ej);
        std::uint32_t node = static_cast<std::uint32_t>(m_ + ej);
        bool minus = true;
        while (node != ei) {
            const std::uint32_t up = parent[node];
            const std::size_t i = (node < m_) ? node : up;
            const std::size_t j = (node < m_) ? up - m_ : node - m_;
            (minus ? minus_cells : plus_cells).emplace_back(i, j);
            minus = !minus;
            node = up;
        }

        double theta = std::numeric_limits<double>::infinity();
        std::pair<std::size_t, std::size_t> leaving = minus_cells.front();
        for (auto& cell : minus_cells) {
            const double f = flow_[idx(cell.first, cell.second)];
            if (f < theta || (f == theta && cell < leaving)) {
                theta = f;
                leaving = cell;
            }
        }
        for (auto& cell : plus_cells) flow_[idx(cell.first, cell.second)] += theta;
        for (auto& cell : minus_cells) flow_[idx(cell.first, cell.second)] -= theta;
        basic_[idx(ei, ej)] = true;
        basic_[idx(leaving.first, leaving.second)] = false;
        flow_[idx(leaving.first, leaving.second)] = 0.0;
    }
};

}  // namespace

FbarEstimate fbar_measures_exact(const BlockDistribution& left, const BlockDistribution& right,
                                 std::size_t cost_entry_cap) {
    JoiningProblem problem(left, right);
    const std::size_t sl = problem.left.size(), sr = problem.right.size();
    if (sl * sr > cost_entry_cap)
        throw transport_cap_exceeded("transport support too large; use Monte-Carlo bounds");

    const std::uint32_t n = problem.n;
    std::vector<std::int32_t> cost(sl * sr);
    for (std::size_t i = 0; i < sl; ++i)
        for (std::size_t j = 0; j < sr; ++j)
            cost[i * sr + j] = static_cast<std::int32_t>(
                n - lcs_length(problem.left[i].first, problem.right[j].first));

    std::vector<double> supply(sl), demand(sr);
    for (std::size_t i = 0; i < sl; ++i) supply[i] = problem.left[i].second;
    for (std::size_t j = 0; j < sr; ++j) demand[j] = problem.right[j].second;

    TransportSimplex simplex(std::move(supply), std::move(demand), std::move(cost));
    FbarEstimate e;
    e.value = simplex.solve() / static_cast<double>(n);
    e.kind = EstimateKind::exact;
    e.n = n;
    e.samples = 0;
    e.std_error = 0.0;
    return e;
}

namespace {

FbarEstimate mean_edit_over_trials(const std::function<double(RngStream&)>& one_trial,
                                   std::uint32_t n, std::uint64_t trials, RngStream& rng) {
    if (trials < 1) throw invalid_input("coupling bound needs at least one trial");
    double sum = 0.0, sumsq = 0.0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        RngStream trial_rng = rng.split(t);
        const double d = one_trial(trial_rng);
        sum += d;
        sumsq += d * d;
    }
    FbarEstimate e;
    const double mean = sum / static_cast<double>(trials);
    e.value = mean;
    e.kind = EstimateKind::upper_bound;
    e.n = n;
    e.samples = trials;
    if (trials > 1) {
        const double var =
            std::max(0.0, (sumsq - static_cast<double>(trials) * mean * mean) /
                              static_cast<double>(trials - 1));
        e.std_error = std::sqrt(var / static_cast<double>(trials));
    }
    return e;
}

}  // namespace

FbarEstimate fbar_coupling_upper(const WordSampler& left, const WordSampler& right,
                                 std::uint32_t n, std::uint64_t trials, RngStream& rng) {
    return mean_edit_over_trials(
        [&](RngStream& trial_rng) {
            RngStream rl = trial_rng.split(0), rr = trial_rng.split(1);
            const Word a = left(rl), b = right(rr);
            return edit_distance_n(a, b);
        },
        n, trials, rng);
}

FbarEstimate fbar_coupling_upper_bernoulli(const BernoulliVector& p, const BernoulliVector& q,
                                           std::uint32_t n, std::uint64_t trials,
                                           RngStream& rng) {
    if (!(p.alphabet == q.alphabet)) throw invalid_input("coupling: alphabet mismatch");
    if (n < 1) throw invalid_input("coupling: block length must be positive");
    auto inverse_cdf = [](const BernoulliVector& v, double u) -> std::uint32_t {
        double acc = 0.0;
        for (std::uint32_t a = 0; a + 1 < v.alphabet.size; ++a) {
            acc += v.probs[a];
            if (u < acc) return a;
        }
        return v.alphabet.size - 1;
    };
    return mean_edit_over_trials(
        [&](RngStream& trial_rng) {
            Word a(p.alphabet, {}), b(q.alphabet, {});
            a.symbols.reserve(n);
            b.symbols.reserve(n);
            for (std::uint32_t i = 0; i < n; ++i) {
                const double u = trial_rng.next_unit();
                a.symbols.push_back(inverse_cdf(p, u));
                b.symbols.push_back(inverse_cdf(q, u));
            }
            return edit_distance_n(a, b);
        },
        n, trials, rng);
}

double bernoulli_fbar(const BernoulliVector& p, const BernoulliVector& q) {
    return 0.5 * city_metric(p, q);
}

double entropy_drift_bound(double eps, std::uint32_t alphabet_size) {
    if (!(eps > 0.0 && eps < 1.0)) throw invalid_input("entropy_drift_bound: eps must be in (0,1)");
    if (alphabet_size < 1) throw invalid_input("entropy_drift_bound: empty alphabet");
    const double h = -eps * std::log(eps) - (1.0 - eps) * std::log(1.0 - eps);
    return 2.0 * h + eps * std::log(static_cast<double>(alphabet_size));
}

double lb_diagnostic(const WordSampler& sampler, std::uint32_t n, double eps,
                     std::uint64_t trials, RngStream& rng) {
    if (trials < 2) throw invalid_input("lb_diagnostic: needs at least two trials");
    std::uint64_t close = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        RngStream pair_rng = rng.split(t);
        RngStream rl = pair_rng.split(0), rr = pair_rng.split(1);
        const Word a = sampler(rl), b = sampler(rr);
        if (a.length() != n || b.length() != n)
            throw invalid_input("lb_diagnostic: sampler produced wrong length");
        if (edit_distance_n(a, b) < eps) ++close;
    }
    return static_cast<double>(close) / static_cast<double>(trials);
}

}  // namespace ergolab

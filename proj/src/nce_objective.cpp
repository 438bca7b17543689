#include "ncegeom/nce_objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "ncegeom/error.hpp"
#include "ncegeom/rng.hpp"

namespace ncegeom {

namespace {

double log_binomial(int n, int r) {
    return std::lgamma(n + 1.0) - std::lgamma(r + 1.0) - std::lgamma(n - r + 1.0);
}

// Visits every composition (n_0..n_{m-1}) of k into m parts together with
// its multinomial probability under `probs`. Order is lexicographic in n
// with n_0 descending, so the summation order is fixed.
template <class Visit>
void for_each_composition(int k, const std::vector<double>& probs, Visit&& visit) {
    const int m = static_cast<int>(probs.size());
    std::vector<double> log_p(probs.size());
    for (std::size_t j = 0; j < probs.size(); ++j) log_p[j] = std::log(probs[j]);
    std::vector<double> log_fact(static_cast<std::size_t>(k) + 1);
    for (int i = 0; i <= k; ++i) log_fact[static_cast<std::size_t>(i)] = std::lgamma(i + 1.0);
    std::vector<int> counts(probs.size(), 0);

    auto rec = [&](auto&& self, int pos, int remaining, double log_w) -> void {
        if (pos == m - 1) {
            counts[static_cast<std::size_t>(pos)] = remaining;
            const double lw = log_w + remaining * log_p[static_cast<std::size_t>(pos)] -
                              log_fact[static_cast<std::size_t>(remaining)];
            visit(counts, std::exp(log_fact[static_cast<std::size_t>(k)] + lw));
            return;
        }
        for (int n = remaining; n >= 0; --n) {
            counts[static_cast<std::size_t>(pos)] = n;
            self(self, pos + 1, remaining - n,
                 log_w + n * log_p[static_cast<std::size_t>(pos)] -
                     log_fact[static_cast<std::size_t>(n)]);
        }
    };
    rec(rec, 0, k, 0.0);
}

// Loss of one anchor row in count-expanded form. For logistic the row holds
// exp(-beta (1 - Z[c, j])); margins 1 - Z lie in [0, 2] on the correlation
// set, so no term exceeds its count and log1p needs no shift. For hinge the
// row holds 1 - beta (1 - Z[c, j]).
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class RowKernel {
public:
    RowKernel(const Eigen::MatrixXd& Z, const LossSpec& loss)
        : loss_(loss), C_(static_cast<int>(Z.rows())) {
        if (loss.kind == LossKind::logistic)
            T_ = (-loss.beta * (1.0 - Z.array())).exp().matrix();
        else
            T_ = (1.0 - loss.beta * (1.0 - Z.array())).matrix();
    }

    template <class Counts>
    double value(int c, const Counts& n) const {
        const double* t = T_.data() + static_cast<std::ptrdiff_t>(c) * C_;
        if (loss_.kind == LossKind::logistic) {
            double s = 0.0;
            for (int j = 0; j < C_; ++j) s += n[static_cast<std::size_t>(j)] * t[j];
            return std::log1p(s);
        }
        double best = 0.0;
        for (int j = 0; j < C_; ++j)
            if (n[static_cast<std::size_t>(j)] > 0) best = std::max(best, t[j]);
        return best;
    }

    // Adds scale * d(loss)/d(Z[c, j]) into row c of G; returns the loss, or
    // 0 for logistic when `want_loss` is false.
    template <class Counts>
    double accumulate(int c, const Counts& n, double scale, RowMatrix& G,
                      bool want_loss = true) const {
        const double* t = T_.data() + static_cast<std::ptrdiff_t>(c) * C_;
        double* g = G.data() + static_cast<std::ptrdiff_t>(c) * C_;
        if (loss_.kind == LossKind::logistic) {
            double s = 1.0;
            for (int j = 0; j < C_; ++j) s += n[static_cast<std::size_t>(j)] * t[j];
            const double f = scale * loss_.beta / s;
            for (int j = 0; j < C_; ++j) g[j] += f * n[static_cast<std::size_t>(j)] * t[j];
            return want_loss ? std::log(s) : 0.0;
        }
        double best = 0.0;
        int arg = -1;
        for (int j = 0; j < C_; ++j)
            if (n[static_cast<std::size_t>(j)] > 0 && t[j] > best) {
                best = t[j];
                arg = j;
            }
        if (arg >= 0) g[arg] += scale * loss_.beta;
        return best;
    }

private:
    LossSpec loss_;
    int C_;
    RowMatrix T_;
};

void check_capacity(int C, int k) {
    if (!exact_feasible(C, k))
        throw CapacityError("exact NCE enumeration for C=" + std::to_string(C) + ", k=" +
                            std::to_string(k) + " needs " +
                            std::to_string(enumeration_size(C, k)) +
                            " terms (cap 1e7); use monte_carlo mode");
}

void check_k(int k) {
    if (k < 1) throw ArgumentError("number of negatives k must be >= 1");
}

void check_shapes(const Eigen::MatrixXd& Z, std::size_t C) {
    if (static_cast<std::size_t>(Z.rows()) != C)
        throw ArgumentError("correlation matrix and class distribution disagree on C");
}

Eigen::MatrixXd finish_gradient(Eigen::MatrixXd G) {
    Eigen::MatrixXd S = 0.5 * (G + G.transpose());
    S.diagonal().setZero();
    return S;
}

// Draws the anchor class and per-class negative counts. Negatives come in
// blocks: one block of b negatives is a single draw from an alias table over
// the compositions of b, and independent blocks add up to a multinomial draw
// of all k negatives.
class NegativeSampler {
public:
    static constexpr double kBlockTableCap = 65536.0;

    NegativeSampler(const std::vector<double>& rho, int k)
        : C_(static_cast<int>(rho.size())), anchor_(rho) {
        if (k > std::numeric_limits<std::uint16_t>::max())
            throw ArgumentError("k is too large for the negative sampler");
        int bmax = 1;
        while (bmax < k && std::exp(log_binomial(bmax + C_, C_ - 1)) <= kBlockTableCap) ++bmax;
        const int nblocks = (k + bmax - 1) / bmax;
        const int base = k / nblocks;
        const int extra = k % nblocks;
        small_ = build(rho, base);
        if (extra > 0) large_ = build(rho, base + 1);
        for (int i = 0; i < nblocks; ++i) plan_.push_back(i < extra ? &*large_ : &*small_);
    }

    int classes() const noexcept { return C_; }
    int draw_anchor(Rng& rng) const { return static_cast<int>(anchor_.sample(rng)); }

    /// Adds one draw of the k negative counts into `counts` (length C).
    void draw_counts(Rng& rng, std::uint16_t* counts) const {
        for (const Block* block : plan_) {
            const std::uint16_t* row = block->row(block->table.sample64(rng()));
            for (int j = 0; j < C_; ++j) counts[j] = static_cast<std::uint16_t>(counts[j] + row[j]);
        }
    }

    /// True when all k negatives form one block, so a composition index
    /// identifies the counts.
    bool single_block() const noexcept { return plan_.size() == 1; }
    std::size_t compositions() const noexcept { return plan_.front()->table.size(); }
    std::size_t draw_index(Rng& rng) const { return plan_.front()->table.sample64(rng()); }
    const std::uint16_t* composition(std::size_t index) const { return plan_.front()->row(index); }

private:
    struct Block {
        int C = 0;
        std::vector<std::uint16_t> rows;  // one composition per row of C counts
        AliasTable table;
        const std::uint16_t* row(std::size_t i) const noexcept {
            return rows.data() + i * static_cast<std::size_t>(C);
        }
    };

    static std::optional<Block> build(const std::vector<double>& rho, int size) {
        std::vector<std::uint16_t> rows;
        std::vector<double> weights;
        for_each_composition(size, rho, [&](const std::vector<int>& n, double w) {
            for (int x : n) rows.push_back(static_cast<std::uint16_t>(x));
            weights.push_back(w);
        });
        return Block{static_cast<int>(rho.size()), std::move(rows), AliasTable(weights)};
    }

    int C_;
    AliasTable anchor_;
    std::optional<Block> small_;
    std::optional<Block> large_;
    std::vector<const Block*> plan_;
};

}  // namespace

double enumeration_size(int C, int k) {
    if (C < 1 || k < 0) return 0.0;
    // The running product is an exact integer at every step.
    double b = 1.0;
    for (int i = 1; i < C; ++i) b = b * (k + i) / i;
    return C * b;
}

bool exact_feasible(int C, int k) {
    return enumeration_size(C, k) <= kExactCapacity;
}

void NCEConfig::validate(int C) const {
    check_k(k);
    if (mode == NceMode::exact) {
        check_capacity(C, k);
    } else if (mc_samples < 100) {
        throw ArgumentError("monte_carlo mode needs at least 100 samples");
    }
}

namespace detail {

double exact_nce_loss(const Eigen::MatrixXd& Z, const std::vector<double>& rho, int k,
                      const LossSpec& loss) {
    loss.validate_objective();
    check_k(k);
    check_shapes(Z, rho.size());
    const int C = static_cast<int>(rho.size());
    check_capacity(C, k);
    const RowKernel kernel(Z, loss);
    double total = 0.0;
    for_each_composition(k, rho, [&](const std::vector<int>& n, double w) {
        double inner = 0.0;
        for (int c = 0; c < C; ++c) inner += rho[static_cast<std::size_t>(c)] * kernel.value(c, n);
        total += w * inner;
    });
    return total;
}

Eigen::MatrixXd exact_nce_grad(const Eigen::MatrixXd& Z, const std::vector<double>& rho, int k,
                               const LossSpec& loss) {
    loss.validate_objective();
    check_k(k);
    check_shapes(Z, rho.size());
    const int C = static_cast<int>(rho.size());
    check_capacity(C, k);
    const RowKernel kernel(Z, loss);
    RowMatrix G = RowMatrix::Zero(C, C);
    for_each_composition(k, rho, [&](const std::vector<int>& n, double w) {
        for (int c = 0; c < C; ++c) kernel.accumulate(c, n, w * rho[static_cast<std::size_t>(c)], G);
    });
    return finish_gradient(Eigen::MatrixXd(G));
}

}  // namespace detail

double exact_nce_loss(const CorrelationMatrix& Z, const ClassDistribution& rho, int k,
                      const LossSpec& loss) {
    return detail::exact_nce_loss(Z.matrix(), rho.probs(), k, loss);
}

Eigen::MatrixXd exact_nce_grad(const CorrelationMatrix& Z, const ClassDistribution& rho, int k,
                               const LossSpec& loss) {
    return detail::exact_nce_grad(Z.matrix(), rho.probs(), k, loss);
}

McEstimate mc_nce_loss(const CorrelationMatrix& Z, const ClassDistribution& rho, int k,
                       const LossSpec& loss, const NCEConfig& cfg) {
    loss.validate_objective();
    check_k(k);
    check_shapes(Z.matrix(), rho.probs().size());
    if (cfg.mode != NceMode::monte_carlo)
        throw ArgumentError("mc_nce_loss requires monte_carlo mode");
    if (cfg.mc_samples < 100) throw ArgumentError("monte_carlo mode needs at least 100 samples");

    const RowKernel kernel(Z.matrix(), loss);
    const NegativeSampler sampler(rho.probs(), k);
    std::vector<std::uint16_t> counts(static_cast<std::size_t>(rho.classes()));
    Rng rng(cfg.seed);
    // Welford; identical samples give exactly zero variance.
    double mean = 0.0, m2 = 0.0;
    for (std::int64_t s = 0; s < cfg.mc_samples; ++s) {
        const int c = sampler.draw_anchor(rng);
        std::fill(counts.begin(), counts.end(), std::uint16_t{0});
        sampler.draw_counts(rng, counts.data());
        const double x = kernel.value(c, counts.data());
        const double delta = x - mean;
        mean += delta / static_cast<double>(s + 1);
        m2 += delta * (x - mean);
    }
    const auto n = static_cast<double>(cfg.mc_samples);
    return {mean, std::sqrt(m2 / (n - 1.0) / n)};
}

NceValue evaluate_nce_loss(const CorrelationMatrix& Z, const ClassDistribution& rho, int k,
                           const LossSpec& loss, std::int64_t mc_samples, std::uint64_t seed) {
    if (exact_feasible(rho.classes(), k)) return {exact_nce_loss(Z, rho, k, loss), 0.0, true};
    const NCEConfig cfg{k, NceMode::monte_carlo, mc_samples, seed};
    const McEstimate est = mc_nce_loss(Z, rho, k, loss, cfg);
    return {est.estimate, est.std_error, false};
}

struct McGradientSampler::Impl {
    // Histogram outcomes (anchor, composition) when there are few of them;
    // each distinct outcome is then evaluated once.
    static constexpr std::size_t kHistogramCap = std::size_t{1} << 20;

    Impl(const ClassDistribution& rho, int k, const LossSpec& loss)
        : C(rho.classes()), loss(loss), sampler(rho.probs(), k), counts(static_cast<std::size_t>(C)) {
        if (sampler.single_block() &&
            sampler.compositions() * static_cast<std::size_t>(C) <= kHistogramCap)
            hist.assign(sampler.compositions() * static_cast<std::size_t>(C), 0);
    }

    int C;
    LossSpec loss;
    NegativeSampler sampler;
    std::vector<std::uint16_t> counts;
    std::vector<std::uint32_t> hist;
    std::vector<std::size_t> touched;
};

McGradientSampler::McGradientSampler(const ClassDistribution& rho, int k, const LossSpec& loss) {
    loss.validate_objective();
    check_k(k);
    impl_ = std::make_unique<Impl>(rho, k, loss);
}

McGradientSampler::~McGradientSampler() = default;
McGradientSampler::McGradientSampler(McGradientSampler&&) noexcept = default;
McGradientSampler& McGradientSampler::operator=(McGradientSampler&&) noexcept = default;

McGradient McGradientSampler::operator()(const CorrelationMatrix& Z, int batch, std::uint64_t seed,
                                         bool want_loss) {
    Impl& m = *impl_;
    check_shapes(Z.matrix(), static_cast<std::size_t>(m.C));
    if (batch < 1) throw ArgumentError("minibatch size must be >= 1");
    const RowKernel kernel(Z.matrix(), m.loss);
    Rng rng(seed);
    RowMatrix G = RowMatrix::Zero(m.C, m.C);
    const double scale = 1.0 / batch;
    double total = 0.0;
    if (!m.hist.empty()) {
        const std::size_t M = m.sampler.compositions();
        for (int s = 0; s < batch; ++s) {
            const auto c = static_cast<std::size_t>(m.sampler.draw_anchor(rng));
            const std::size_t key = c * M + m.sampler.draw_index(rng);
            if (m.hist[key]++ == 0) m.touched.push_back(key);
        }
        for (std::size_t key : m.touched) {
            const double h = m.hist[key];
            total += h * kernel.accumulate(static_cast<int>(key / M), m.sampler.composition(key % M),
                                           h * scale, G, want_loss);
            m.hist[key] = 0;
        }
        m.touched.clear();
    } else {
        for (int s = 0; s < batch; ++s) {
            const int c = m.sampler.draw_anchor(rng);
            std::fill(m.counts.begin(), m.counts.end(), std::uint16_t{0});
            m.sampler.draw_counts(rng, m.counts.data());
            total += kernel.accumulate(c, m.counts.data(), scale, G, want_loss);
        }
    }
    return {finish_gradient(Eigen::MatrixXd(G)), want_loss ? total / batch : 0.0};
}

McGradient mc_nce_grad_and_loss(const CorrelationMatrix& Z, const ClassDistribution& rho,
                                int k, const LossSpec& loss, int batch, std::uint64_t seed) {
    if (batch < 1) throw ArgumentError("minibatch size must be >= 1");
    check_shapes(Z.matrix(), rho.probs().size());
    McGradientSampler sampler(rho, k, loss);
    return sampler(Z, batch, seed);
}

Eigen::MatrixXd mc_nce_grad(const CorrelationMatrix& Z, const ClassDistribution& rho, int k,
                            const LossSpec& loss, int batch, std::uint64_t seed) {
    return mc_nce_grad_and_loss(Z, rho, k, loss, batch, seed).grad;
}

AtomizedModel::AtomizedModel(CorrelationMatrix Zfine, std::vector<int> partition,
                             std::vector<std::vector<double>> within, ClassDistribution rho)
    : Zfine_(std::move(Zfine)),
      partition_(std::move(partition)),
      within_(std::move(within)),
      rho_(std::move(rho)) {
    const int A = Zfine_.size();
    const int C = rho_.classes();
    if (static_cast<int>(partition_.size()) != A)
        throw InvariantError("atom partition must assign every atom of Zfine");
    if (static_cast<int>(within_.size()) != C)
        throw InvariantError("need one within-class distribution per class");
    members_.assign(static_cast<std::size_t>(C), {});
    for (int a = 0; a < A; ++a) {
        const int c = partition_[static_cast<std::size_t>(a)];
        if (c < 0 || c >= C) throw InvariantError("atom assigned to an unknown class");
        members_[static_cast<std::size_t>(c)].push_back(a);
    }
    within_prob_.assign(static_cast<std::size_t>(A), 0.0);
    marginal_.assign(static_cast<std::size_t>(A), 0.0);
    for (int c = 0; c < C; ++c) {
        const auto& atoms = members_[static_cast<std::size_t>(c)];
        const auto& w = within_[static_cast<std::size_t>(c)];
        if (atoms.empty()) throw InvariantError("class " + std::to_string(c) + " has no atoms");
        if (w.size() != atoms.size())
            throw InvariantError("within-class distribution size mismatch for class " +
                                 std::to_string(c));
        double sum = 0.0;
        for (double p : w) {
            if (!(p > 0.0)) throw InvariantError("within-class probabilities must be positive");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw InvariantError("within-class probabilities must sum to 1");
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            within_prob_[static_cast<std::size_t>(atoms[i])] = w[i];
            marginal_[static_cast<std::size_t>(atoms[i])] = rho_[static_cast<std::size_t>(c)] * w[i];
        }
    }
}

double exact_nce_loss_atomized(const AtomizedModel& model, int k, const LossSpec& loss) {
    loss.validate_objective();
    check_k(k);
    const int A = model.atoms();
    const int C = model.classes();
    double pairs = 0.0;
    for (int c = 0; c < C; ++c) {
        const auto n = static_cast<double>(model.atoms_of(c).size());
        pairs += n * n;
    }
    const double size = pairs * std::exp(log_binomial(k + A - 1, A - 1));
    if (size > kExactCapacity * (1.0 + 1e-9))
        throw CapacityError("atomized NCE enumeration needs " + std::to_string(size) +
                            " terms (cap 1e7)");

    const Eigen::MatrixXd& Z = model.zfine().matrix();
    std::vector<double> marginal(static_cast<std::size_t>(A));
    for (int a = 0; a < A; ++a) marginal[static_cast<std::size_t>(a)] = model.marginal(a);

    // Positive-pair terms, flattened for the inner loop.
    struct Pair {
        int a;
        int ap;
        double weight;
    };
    std::vector<Pair> positive;
    for (int c = 0; c < C; ++c)
        for (int a : model.atoms_of(c))
            for (int ap : model.atoms_of(c))
                positive.push_back({a, ap,
                                    model.rho()[static_cast<std::size_t>(c)] * model.within_prob(a) *
                                        model.within_prob(ap)});

    double total = 0.0;
    for_each_composition(k, marginal, [&](const std::vector<int>& n, double w) {
        double inner = 0.0;
        for (const Pair& p : positive) {
            const double pos = Z(p.a, p.ap);
            double value;
            if (loss.kind == LossKind::logistic) {
                double s = 0.0;
                for (int b = 0; b < A; ++b)
                    if (n[static_cast<std::size_t>(b)] > 0)
                        s += n[static_cast<std::size_t>(b)] * std::exp(-loss.beta * (pos - Z(p.a, b)));
                value = std::log1p(s);
            } else {
                value = 0.0;
                for (int b = 0; b < A; ++b)
                    if (n[static_cast<std::size_t>(b)] > 0)
                        value = std::max(value, 1.0 - loss.beta * (pos - Z(p.a, b)));
            }
            inner += p.weight * value;
        }
        total += w * inner;
    });
    return total;
}

namespace {

std::vector<double> flat_dirichlet(std::size_t n, Rng& rng) {
    std::vector<double> w(n);
    double sum = 0.0;
    for (double& x : w) {
        x = -std::log(rng.uniform_pos());
        sum += x;
    }
    for (double& x : w) x /= sum;
    return w;
}

}  // namespace

AtomizedModel random_atomized_model(int C, int max_atoms_per_class, Rng& rng) {
    if (C < 2) throw ArgumentError("random_atomized_model needs C >= 2");
    if (max_atoms_per_class < 1) throw ArgumentError("need at least one atom per class");
    std::vector<int> partition;
    std::vector<std::vector<double>> within;
    for (int c = 0; c < C; ++c) {
        const int n = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_atoms_per_class));
        partition.insert(partition.end(), static_cast<std::size_t>(n), c);
        within.push_back(flat_dirichlet(static_cast<std::size_t>(n), rng));
    }
    CorrelationMatrix Zfine = random_correlation(static_cast<int>(partition.size()), rng);
    ClassDistribution rho(flat_dirichlet(static_cast<std::size_t>(C), rng));
    return AtomizedModel(std::move(Zfine), std::move(partition), std::move(within), std::move(rho));
}

CollapseResult collapse_check(const AtomizedModel& model, int k, const LossSpec& loss) {
    const int C = model.classes();
    double combos = 1.0;
    for (int c = 0; c < C; ++c) combos *= static_cast<double>(model.atoms_of(c).size());
    if (combos > 1e4)
        throw CapacityError("collapse check needs " + std::to_string(combos) +
                            " representative combinations (cap 1e4)");

    CollapseResult out;
    out.atomized_loss = exact_nce_loss_atomized(model, k, loss);
    out.best_collapsed_loss = std::numeric_limits<double>::infinity();

    const Eigen::MatrixXd& Zf = model.zfine().matrix();
    std::vector<std::size_t> digit(static_cast<std::size_t>(C), 0);
    for (;;) {
        std::vector<int> reps(static_cast<std::size_t>(C));
        for (int c = 0; c < C; ++c)
            reps[static_cast<std::size_t>(c)] = model.atoms_of(c)[digit[static_cast<std::size_t>(c)]];
        Eigen::MatrixXd Zc(C, C);
        for (int i = 0; i < C; ++i)
            for (int j = 0; j < C; ++j)
                Zc(i, j) = Zf(reps[static_cast<std::size_t>(i)], reps[static_cast<std::size_t>(j)]);
        const double value = detail::exact_nce_loss(Zc, model.rho().probs(), k, loss);
        if (value < out.best_collapsed_loss) {
            out.best_collapsed_loss = value;
            out.witness = reps;
        }
        int pos = 0;
        while (pos < C) {
            auto& d = digit[static_cast<std::size_t>(pos)];
            if (++d < model.atoms_of(pos).size()) break;
            d = 0;
            ++pos;
        }
        if (pos == C) break;
    }
    return out;
}

}  // namespace ncegeom

#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "ncegeom/latent_model.hpp"
#include "ncegeom/losses.hpp"

namespace ncegeom {

// Population NCE loss of a latent-indistinguishable representation given by
// its Gram matrix Z:
//
//   L(Z) = E_{c, c_1..c_k ~ rho} l(1 - Z[c, c_1], ..., 1 - Z[c, c_k]).
//
// The loss only depends on how many negatives fall in each class, so the
// exact expectation enumerates compositions (n_1..n_C) of k with multinomial
// weights instead of all C^k tuples.

/// Upper bound on (anchor, composition) terms evaluated by exact routines.
inline constexpr double kExactCapacity = 1e7;

/// C * binom(k + C - 1, C - 1), as a double so it cannot overflow.
double enumeration_size(int C, int k);
bool exact_feasible(int C, int k);

enum class NceMode { exact, monte_carlo };

struct NCEConfig {
    int k = 1;
    NceMode mode = NceMode::exact;
    std::int64_t mc_samples = 1'000'000;
    std::uint64_t seed = 0;

    /// Throws ArgumentError/CapacityError for an unusable configuration of
    /// `C` classes.
    void validate(int C) const;
};

double exact_nce_loss(const CorrelationMatrix& Z, const ClassDistribution& rho, int k,
                      const LossSpec& loss);

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

/// Sample mean and standard error over cfg.mc_samples i.i.d. draws of
/// (c, c_1..c_k). Requires cfg.mode == monte_carlo and at least 100 samples.
McEstimate mc_nce_loss(const CorrelationMatrix& Z, const ClassDistribution& rho, int k,
                       const LossSpec& loss, const NCEConfig& cfg);

/// Result of evaluate_nce_loss: exact when the enumeration fits, else MC.
struct NceValue {
    double value = 0.0;
    double std_error = 0.0;
    bool exact = true;
};
NceValue evaluate_nce_loss(const CorrelationMatrix& Z, const ClassDistribution& rho, int k,
                           const LossSpec& loss, std::int64_t mc_samples, std::uint64_t seed);

/// Gradient of exact_nce_loss over symmetric matrices with the Frobenius
/// inner product: (G + G^T)/2 of the entrywise gradient G, diagonal zeroed.
/// Moving the pair (i, j), (j, i) together by h changes the loss by
/// 2 * grad(i, j) * h.
Eigen::MatrixXd exact_nce_grad(const CorrelationMatrix& Z, const ClassDistribution& rho, int k,
                               const LossSpec& loss);

/// Unbiased minibatch estimate of exact_nce_grad with the same conventions.
Eigen::MatrixXd mc_nce_grad(const CorrelationMatrix& Z, const ClassDistribution& rho, int k,
                            const LossSpec& loss, int batch, std::uint64_t seed);

struct McGradient {
    Eigen::MatrixXd grad;
    double loss = 0.0;  // minibatch mean of the loss
};
McGradient mc_nce_grad_and_loss(const CorrelationMatrix& Z, const ClassDistribution& rho,
                                int k, const LossSpec& loss, int batch, std::uint64_t seed);

/// Reusable minibatch gradient estimator for a fixed (rho, k, loss). Holds
/// the sampling tables so repeated calls skip their construction; calls with
/// the same seed return the same estimate as mc_nce_grad_and_loss.
class McGradientSampler {
public:
    McGradientSampler(const ClassDistribution& rho, int k, const LossSpec& loss);
    ~McGradientSampler();
    McGradientSampler(McGradientSampler&&) noexcept;
    McGradientSampler& operator=(McGradientSampler&&) noexcept;

    /// With `want_loss` false the returned loss is 0 and the logistic
    /// per-sample logarithms are skipped.
    McGradient operator()(const CorrelationMatrix& Z, int batch, std::uint64_t seed,
                          bool want_loss = true);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Representation that is not constant within classes: class c owns a set
/// of atoms (support points), each with a within-class probability, and
/// Zfine is the Gram matrix of all atom embeddings.
class AtomizedModel {
public:
    /// `partition[a]` is the class of atom a; `within[c]` lists the
    /// probabilities of class c's atoms in increasing atom order.
    AtomizedModel(CorrelationMatrix Zfine, std::vector<int> partition,
                  std::vector<std::vector<double>> within, ClassDistribution rho);

    const CorrelationMatrix& zfine() const noexcept { return Zfine_; }
    const std::vector<int>& partition() const noexcept { return partition_; }
    const std::vector<std::vector<double>>& within() const noexcept { return within_; }
    const ClassDistribution& rho() const noexcept { return rho_; }
    int atoms() const noexcept { return Zfine_.size(); }
    int classes() const noexcept { return rho_.classes(); }
    const std::vector<int>& atoms_of(int c) const { return members_[static_cast<std::size_t>(c)]; }

    /// Probability of drawing atom a from the class marginal mixture.
    double marginal(int a) const noexcept { return marginal_[static_cast<std::size_t>(a)]; }
    double within_prob(int a) const noexcept { return within_prob_[static_cast<std::size_t>(a)]; }

private:
    CorrelationMatrix Zfine_;
    std::vector<int> partition_;
    std::vector<std::vector<double>> within_;
    ClassDistribution rho_;
    std::vector<std::vector<int>> members_;
    std::vector<double> within_prob_;
    std::vector<double> marginal_;
};

/// Random model for property checks: 1..max_atoms_per_class atoms per
/// class, the Gram of independent random unit vectors as Zfine, and
/// Dirichlet(1) class and within-class weights.
AtomizedModel random_atomized_model(int C, int max_atoms_per_class, Rng& rng);

/// Exact NCE loss with x, x+ drawn i.i.d. from the anchor class's atoms and
/// negatives from the marginal over atoms.
double exact_nce_loss_atomized(const AtomizedModel& model, int k, const LossSpec& loss);

struct CollapseResult {
    double atomized_loss = 0.0;
    double best_collapsed_loss = 0.0;
    std::vector<int> witness;  // chosen atom per class
};

/// Compares the atomized loss with every latent-indistinguishable collapse
/// that keeps one representative atom per class.
CollapseResult collapse_check(const AtomizedModel& model, int k, const LossSpec& loss);

namespace detail {

// Unvalidated matrix versions, used for finite-difference probes that step
// slightly outside the correlation set.
double exact_nce_loss(const Eigen::MatrixXd& Z, const std::vector<double>& rho, int k,
                      const LossSpec& loss);
Eigen::MatrixXd exact_nce_grad(const Eigen::MatrixXd& Z, const std::vector<double>& rho, int k,
                               const LossSpec& loss);

}  // namespace detail

}  // namespace ncegeom

#pragma once

#include <vector>

#include "volta/rng.hpp"
#include "volta/tensor.hpp"

namespace volta {

// Diagonal Gaussian q(z) = N(mu, exp(log_sigma)^2). sigma stays positive by
// construction. Also used for priors (mu', sigma').
struct GaussianPosterior {
    Tensor mu;        // [n]
    Tensor log_sigma; // [n]

    GaussianPosterior() = default;
    GaussianPosterior(Tensor mu_, Tensor log_sigma_);

    bool empty() const { return !mu.defined(); }
    int count() const { return empty() ? 0 : mu.shape()[0]; }
};

// n_vars independent categoricals over k categories, pi_j = softmax(logits_j).
struct CategoricalPosterior {
    Tensor logits; // [n_vars, k]
    int k = 0;

    CategoricalPosterior() = default;
    CategoricalPosterior(Tensor logits_, int k_);
    // Test/oracle convenience: probabilities straight to log-space logits.
    static CategoricalPosterior from_probs(const std::vector<std::vector<double>>& probs);

    bool empty() const { return !logits.defined(); }
    int count() const { return empty() ? 0 : logits.shape()[0]; }
    Tensor probs() const { return softmax(logits, 1); }
};

// Posterior (or prior) parameters for both latent families.
struct PosteriorSet {
    GaussianPosterior gauss;
    CategoricalPosterior cat;
};

// Input-independent InfoGAN-style codes: continuous entries in [-1,1] and
// discrete one-hot choices out of k.
struct LatentCodes {
    std::vector<double> continuous;
    std::vector<int> discrete; // category per discrete code
    int k = 0;

    int n_continuous() const { return static_cast<int>(continuous.size()); }
    int n_discrete() const { return static_cast<int>(discrete.size()); }
    std::vector<double> one_hot(int idx) const;
    // Flat [c_g ; one_hot(c_a_0) ; ... ] vector used by the latent connection.
    std::vector<double> flat() const;
};

// Reparametrized draws: z_g from the Gaussian trick, z_a relaxed one-hots
// from Gumbel-Softmax at temperature tau.
struct LatentSample {
    Tensor z_g; // [n_zg]
    Tensor z_a; // [n_za, k]
    double tau = 1.0;

    bool has_gauss() const { return z_g.defined(); }
    bool has_cat() const { return z_a.defined(); }
};

// z_i = mu_i + sigma_i * eps_i; gradient flows to mu and log_sigma only.
Tensor sample_gaussian(const GaussianPosterior& post, RandomStream& rng);

// Relaxed one-hot rows y = softmax((logits + G)/tau), G ~ Gumbel(0,1).
Tensor sample_gumbel_softmax(const CategoricalPosterior& post, double tau, RandomStream& rng);

LatentCodes sample_codes(int n_cg, int n_ca, int k, RandomStream& rng);

// Per-dimension KL(q || p) for diagonal Gaussians; differentiable in both.
Tensor kl_gaussian(const GaussianPosterior& q, const GaussianPosterior& p);

// Per-variable KL(q || p) for categoricals, with the 0 log 0 = 0 convention.
Tensor kl_categorical(const CategoricalPosterior& q, const CategoricalPosterior& p);

// Recovery-head output for one latent code: a predicted Gaussian mean for a
// continuous code, or k-way logits for a discrete one.
struct RecoveryParam {
    enum class Kind { Continuous, Discrete };
    Kind kind = Kind::Continuous;
    Tensor value; // scalar mean, or [k] logits

    static RecoveryParam continuous(Tensor mean);
    static RecoveryParam discrete(Tensor logits);
};

// log N(code; theta_mean, 1) for continuous codes.
Tensor code_log_likelihood(const RecoveryParam& theta, double code);
// log softmax(theta_logits)[category] for discrete codes.
Tensor code_log_likelihood(const RecoveryParam& theta, int category);

// Componentwise (1-alpha) z1 + alpha z2. Evaluation-time helper; returns a
// fresh leaf (no gradient history).
Tensor lerp(const Tensor& z1, const Tensor& z2, double alpha);

// Gaussian latents lerp; categorical latents lerp on the simplex and
// renormalize. alpha outside [0,1] is a contract error.
LatentSample interpolate_latents(const LatentSample& a, const LatentSample& b, double alpha);

} // namespace volta

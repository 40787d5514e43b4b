#pragma once

#include <vector>

#include "volta/latent.hpp"
#include "volta/tensor.hpp"

namespace volta {

struct LossWeights {
    double beta_max = 0.1;        // KL weight ceiling after warmup
    double warmup_fraction = 0.25; // linear ascent over this fraction of training
    double gamma = 1.0;           // VMIM weight
    double lambda_fb = 1.0;       // free-bits floor per KL term
    double qami_weight = 1.0;     // zeroed by the harness when QA heads are inactive

    void validate() const;
};

struct LossReport {
    double ae = 0.0;
    double reg = 0.0;
    double vmim = 0.0;
    double qami = 0.0;
    double total = 0.0;
    std::vector<double> kl_per_dim;
    double beta_used = 0.0;
};

// Standard language-modeling cross entropy; positions equal to pad_id are
// excluded from the mean.
Tensor reconstruction_loss(const Tensor& logits, const std::vector<int>& targets, int pad_id);

// Linear from 0 at step 0 to beta_max at warmup_fraction * total_steps,
// constant afterwards.
double beta_at(long long step, long long total_steps, const LossWeights& weights);

// Mean over all latent dimensions/variables of max(lambda, KL_i). Either KL
// vector may be undefined when that latent family is absent. joint_mean=false
// averages the two family means instead of pooling every term.
Tensor regularization_loss(const Tensor& kl_gauss, const Tensor& kl_cat, double lambda,
                           bool joint_mean = true);

// Mean over codes of -log p(c; theta). Thetas are ordered continuous codes
// first, then discrete codes, matching LatentCodes::flat().
Tensor vmim_loss(const std::vector<RecoveryParam>& thetas, const LatentCodes& codes);

// -( mean log g+  +  1/2 mean log(1-g_q~)  +  1/2 mean log(1-g_a~) ).
// Every score must lie strictly in (0,1); negatives are required.
Tensor qami_loss(const std::vector<Tensor>& pos_scores, const std::vector<Tensor>& neg_q_scores,
                 const std::vector<Tensor>& neg_a_scores);

struct TotalLoss {
    Tensor value;
    LossReport report;
};

// total = ae + beta(step) * reg + gamma * vmim + qami_weight * qami. Undefined
// parts contribute zero. NaN/Inf in any part raises a numeric error naming it.
TotalLoss total_loss(const Tensor& ae, const Tensor& reg, const Tensor& vmim, const Tensor& qami,
                     const LossWeights& weights, long long step, long long total_steps,
                     std::vector<double> kl_per_dim = {});

} // namespace volta

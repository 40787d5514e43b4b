#pragma once

#include <string>
#include <vector>

#include "volta/latent.hpp"
#include "volta/rng.hpp"

namespace volta {

using Sentence = std::vector<std::string>;

// |unique k-grams across the corpus| / total word count. The word-count
// denominator is deliberate; total_kgram_denominator switches to the
// total-k-gram convention.
double distinct_k(const std::vector<Sentence>& sentences, int k,
                  bool total_kgram_denominator = false);

// Sentence BLEU in [0,1]: geometric mean of modified 1..max_n precisions with
// +1 smoothing on orders above 1, classic brevity penalty, closest reference
// length (ties to the shorter).
double sentence_bleu(const Sentence& hyp, const std::vector<Sentence>& refs, int max_n = 4);

// Mean BLEU of each sentence against all others as references, times 100.
double self_bleu(const std::vector<Sentence>& sentences, int max_n = 4);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// precision: mean over hypotheses of max-BLEU against the context's
// references; recall: the mirror; f1: harmonic mean.
PrecisionRecall bleu_precision_recall(const std::vector<std::vector<Sentence>>& hyps_per_context,
                                      const std::vector<std::vector<Sentence>>& refs_per_context,
                                      int max_n = 4);

// exp(mean negative log-likelihood per token).
double perplexity(const std::vector<double>& token_nlls);

// Count of latent dimensions whose across-dataset variance of the posterior
// mean exceeds delta (population variance).
int active_units(const std::vector<std::vector<double>>& posterior_means, double delta = 0.01);

// Monte-Carlo estimate of E_q(x,z)[log q(z|x) - log q_agg(z)] with q_agg the
// batch mixture of posteriors.
double mutual_information(const std::vector<GaussianPosterior>& posteriors,
                          int samples_per_posterior, RandomStream& rng);

} // namespace volta

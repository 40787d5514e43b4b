#pragma once

#include <functional>
#include <string>
#include <vector>

#include "volta/model.hpp"
#include "volta/objectives.hpp"
#include "volta/synthetic.hpp"
#include "volta/tokenizer.hpp"

namespace volta {

struct CheckpointData;

struct OptimizerConfig {
    std::string algo = "sgd"; // sgd | adam
    double lr = 5e-5;
    double momentum = 0.9;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    long long steps = 1000;
    int batch_size = 8;

    void validate() const;
};

struct RunConfig {
    ModelConfig model;
    LossWeights weights;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;
    std::string task = "lm"; // lm | dialog | qag
    std::string corpus_path; // empty -> synthetic corpus from `synthetic`
    SyntheticSpec synthetic;
    bool variational = true;
    std::string codes_mode = "random"; // random | fixed
    bool joint_reg_mean = true;
    int holdout_contexts = 0;
    int ppl_samples = 1;
    int gen_samples = 5;
    int max_gen_len = 12;
    bool qag_span_first = true;
    bool constrained_span = false;

    void validate() const;
    std::string to_json() const; // stable field order
    static RunConfig from_json(const std::string& text);
};

// One tokenized example. Spans are 1-based token positions in the context.
struct TrainExample {
    int context_id = 0;
    std::vector<int> context;
    std::vector<int> target;
    int span_s = 0;
    int span_e = 0;
};

struct Dataset {
    Tokenizer tokenizer;
    std::vector<TrainExample> train;
    std::vector<TrainExample> holdout;
};

// Synthetic generation or corpus files, tokenized and split. The holdout
// keeps the last `holdout_contexts` context groups aside.
Dataset prepare_data(const RunConfig& config);

class Trainer {
public:
    explicit Trainer(RunConfig config);

    const RunConfig& config() const { return config_; }
    VoltaModel& model() { return model_; }
    const VoltaModel& model() const { return model_; }
    const Tokenizer& tokenizer() const { return data_.tokenizer; }
    const std::vector<TrainExample>& train_set() const { return data_.train; }
    const std::vector<TrainExample>& holdout_set() const { return data_.holdout; }
    long long step_count() const { return step_; }
    bool diverged() const { return diverged_; }
    const LatentCodes& fixed_codes() const { return fixed_codes_; }

    // One optimizer step over the next batch. Throws NumericError when the
    // loss goes non-finite (parameters are left at their last good values).
    LossReport train_step();

    // Runs the configured number of steps; stops early on divergence with the
    // last good parameters retained. The callback sees every report.
    std::vector<LossReport> run(
        const std::function<void(long long, const LossReport&)>& on_step = {});

    // Greedy next-token accuracy of the decoder over a set of examples.
    double next_token_accuracy(const std::vector<TrainExample>& examples);

    CheckpointData make_checkpoint() const;
    // Restores parameters and optimizer state; shapes are validated against
    // the current model and mismatches name the offending tensor.
    void load_state(const CheckpointData& data);
    static Trainer from_checkpoint(const CheckpointData& data);

private:
    struct ExampleParts {
        Tensor ae, reg, vmim;
        Tensor q_hidden, a_hidden;
        std::vector<double> kl_per_dim;
    };
    ExampleParts example_parts(const TrainExample& ex, RandomStream& rng);
    TotalLoss batch_loss(const std::vector<const TrainExample*>& batch, RandomStream& rng);
    void optimizer_update();
    void reshuffle();
    LatentCodes draw_codes(RandomStream& rng) const;

    RunConfig config_;
    Dataset data_;
    VoltaModel model_;
    LatentCodes fixed_codes_;
    std::vector<std::vector<double>> opt_m_, opt_v_; // sgd uses opt_m_ only
    long long step_ = 0;
    bool diverged_ = false;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    long long epoch_ = 0;
};

} // namespace volta

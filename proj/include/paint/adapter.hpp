#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "paint/encoder.hpp"
#include "paint/image.hpp"
#include "paint/objectives.hpp"
#include "paint/prompt_memory.hpp"

namespace paint {

// Online adaptation loop: per batch, pick (or allocate) a prompt, pseudo-label
// confident samples before the update, take exactly one SGD step on the
// selected prompt value plus the shallow encoder blocks, refresh the key, and
// only then predict.

struct AdaptationConfig {
    double eta = 0.2;    // reliability threshold for allocating a new prompt
    double phi = 0.6;    // pseudo-label confidence threshold
    double beta = 1.0;   // weight of the interpolation-consistency term
    double gamma = 0.8;  // key moving-average smoothing
    double alpha = 1.0;  // Beta(alpha, alpha) for mixing coefficients
    int prompt_len = 2;
    int shallow_blocks = 3;  // encoder blocks receiving gradient updates
    double lr = 0.05;
    int batch_size = 32;
    unsigned long long seed = 0;

    void validate() const;
};

// Ablation switches: the full method updates both; disabling one freezes the
// corresponding parameters while the rest of the pipeline runs unchanged.
struct AdaptOptions {
    bool update_prompt = true;
    bool update_blocks = true;
};

// Bypasses retrieval/voting/reliability: the caller dictates either reuse of
// a specific entry or allocation of a fresh one (the true-domain oracle).
struct SelectionOverride {
    bool allocate_new = false;
    int entry_index = -1;  // consulted when allocate_new is false
};

struct AdapterState {
    EncoderParams live;
    EncoderParams frozen;  // source snapshot; queries always come from here
    PromptMemory memory;
    std::mt19937_64 rng;
    int batch_index = 0;
    long long sgd_calls = 0;  // instrumentation: exactly one bump per adapted batch

    static AdapterState init(const EncoderParams& source, unsigned long long seed);
};

struct BatchOutcome {
    int selected_entry = -1;
    bool was_new = false;
    std::optional<double> reliability;
    double loss_mi = 0.0;
    double loss_ic = 0.0;
    double loss_total = 0.0;
    int pseudo_label_count = 0;
    std::vector<int> predictions;  // computed after the gradient step
    int prompt_count_after = 0;
};

// One live parameter tensor paired with its graph leaf.
struct TrainableBinding {
    std::string name;
    Tensor* target;
    Var var;
};

// theta <- theta - lr * grad for every binding; anything else is untouched.
// Aborts with a diagnostic naming the tensor if a gradient is non-finite.
void sgd_step(AdapterState& state, Graph& g, const std::vector<TrainableBinding>& trainables,
              double lr);

// The per-batch loss graph, exposed separately so gradient-checking tests can
// drive the exact production pipeline.
struct AdaptGraph {
    Graph g;
    Var loss;          // [1,1]: L_mi + beta * L_ic
    Var probs_matrix;  // [B, K] pre-update probabilities with the selected prompt
    std::vector<TrainableBinding> bindings;
    double loss_mi = 0.0;
    double loss_ic = 0.0;
    double loss_total = 0.0;
    int pseudo_label_count = 0;
    int mixed_count = 0;
};

// Steps 3-5 of the batch recipe: pre-update forward, pseudo-labels, mixing,
// and the combined loss.  Consumes state.rng for the mixing permutation and
// lambdas; does not mutate parameters or memory.
AdaptGraph build_adaptation_graph(const std::vector<Image>& batch, AdapterState& state,
                                  const AdaptationConfig& config, const AdaptOptions& options,
                                  int selected_entry);

// Frozen-encoder query features, one row per image.
Tensor extract_batch_queries(const std::vector<Image>& batch, const AdapterState& state);

// Full per-batch recipe; takes images only (no labels, no domain identity).
BatchOutcome adapt_batch(const std::vector<Image>& batch, AdapterState& state,
                         const AdaptationConfig& config, const AdaptOptions& options = {},
                         const SelectionOverride* override_selection = nullptr);

// Entropy-minimization baseline: no prompts, no memory; the shallow blocks of
// the shared model take one SGD step on mean prediction entropy.
BatchOutcome entropy_only_batch(const std::vector<Image>& batch, AdapterState& state,
                                const AdaptationConfig& config);

// Post-update argmax predictions (ties -> lowest class); prompt_index -1 runs
// prompt-free.
std::vector<int> predict(const std::vector<Image>& batch, int prompt_index,
                         const AdapterState& state);

}  // namespace paint

#pragma once

#include <random>
#include <vector>

#include "paint/autodiff.hpp"
#include "paint/image.hpp"
#include "paint/tensor.hpp"

namespace paint {

// Adaptation losses.  Each loss exists twice: a plain scalar function over
// probability tensors (used by tests and metrics) and a graph builder (used
// wherever gradients are needed).  The graph builders clamp probabilities at
// the shared floor before taking logs, so 0 * log 0 terms contribute 0.

// ---- scalar forms ----

// Natural-log entropy of one distribution; rejects rows that do not sum to 1
// within 1e-9 or contain negative entries.
double entropy(std::span<const double> p);
double entropy(const Tensor& p);  // [1, K]

// Mean per-sample entropy minus entropy of the mean prediction.
double mutual_info_loss(const Tensor& probs);

// Mean per-sample entropy alone (the classic entropy-minimization baseline).
double entropy_only_loss(const Tensor& probs);

double combined_loss(double loss_mi, double loss_ic, double beta);

// ---- pseudo-labels and mixing ----

struct PseudoLabelSet {
    std::vector<int> indices;  // batch positions whose max probability exceeded the threshold
    std::vector<int> labels;   // argmax class per retained position (ties -> lowest class)
};

// Retains exactly the samples with max probability > phi.
PseudoLabelSet assign_pseudo_labels(const Tensor& pre_update_probs, double phi);

struct MixedBatch {
    std::vector<Image> images;    // convex pixel blends
    Tensor soft_labels;           // [M, K]; each row has at most two nonzero entries
    std::vector<double> lambdas;  // blend weight per pair, in [0, 1]

    int size() const { return static_cast<int>(images.size()); }
    bool empty() const { return images.empty(); }
};

// Pairs the confident subset with a seeded random permutation of itself
// (one re-roll if the permutation has fixed points, then accepted as is);
// lambda ~ Beta(alpha, alpha) per pair.  Fewer than 2 retained samples ->
// empty batch, which downstream treats as L_ic = 0.
MixedBatch build_mixed_batch(const std::vector<Image>& images, const PseudoLabelSet& labels,
                             std::mt19937_64& rng, double alpha, int num_classes);

// Mean soft cross-entropy between predictions on mixed samples and their
// blended labels; 0 on an empty batch.
double interpolation_consistency_loss(const Tensor& mixed_probs, const Tensor& soft_labels);

// ---- graph builders (inputs are probability nodes, e.g. softmax outputs) ----

// Mean per-sample entropy, a [1,1] node.
Var entropy_only_node(Graph& g, Var probs);

// Mean entropy minus entropy of the mean prediction, a [1,1] node.
Var mutual_info_node(Graph& g, Var probs);

// Mean of -sum_k soft_labels[k] * log(probs[k]) over rows, a [1,1] node.
// soft_labels enter as a constant leaf.
Var soft_cross_entropy_node(Graph& g, Var probs, const Tensor& soft_labels);

// loss_mi + beta * loss_ic.
Var combined_node(Graph& g, Var loss_mi, Var loss_ic, double beta);

}  // namespace paint

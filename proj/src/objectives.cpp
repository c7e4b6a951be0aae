#include "paint/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace paint {

double entropy(std::span<const double> p) {
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0) throw std::invalid_argument("entropy: negative probability");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("entropy: probabilities sum to " + std::to_string(sum) +
                                    ", not 1");
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

double entropy(const Tensor& p) {
    if (p.n_rows != 1) throw std::invalid_argument("entropy: expected a single row, got " + p.shape_str());
    return entropy(p.row_span(0));
}

double mutual_info_loss(const Tensor& probs) {
    if (probs.n_rows < 1) throw std::invalid_argument("mutual_info_loss: empty batch");
    double mean_h = 0.0;
    for (int i = 0; i < probs.n_rows; ++i) mean_h += entropy(probs.row_span(i));
    mean_h /= probs.n_rows;
    const Tensor mean_p = kernels::mean_axis(probs, 0);
    return mean_h - entropy(mean_p.row_span(0));
}

double entropy_only_loss(const Tensor& probs) {
    if (probs.n_rows < 1) throw std::invalid_argument("entropy_only_loss: empty batch");
    double mean_h = 0.0;
    for (int i = 0; i < probs.n_rows; ++i) mean_h += entropy(probs.row_span(i));
    return mean_h / probs.n_rows;
}

double combined_loss(double loss_mi, double loss_ic, double beta) {
    return loss_mi + beta * loss_ic;
}

PseudoLabelSet assign_pseudo_labels(const Tensor& pre_update_probs, double phi) {
    PseudoLabelSet out;
    for (int i = 0; i < pre_update_probs.n_rows; ++i) {
        int best = 0;
        for (int k = 1; k < pre_update_probs.n_cols; ++k)
            if (pre_update_probs.at(i, k) > pre_update_probs.at(i, best)) best = k;
        if (pre_update_probs.at(i, best) > phi) {
            out.indices.push_back(i);
            out.labels.push_back(best);
        }
    }
    return out;
}

namespace {

double draw_beta(std::mt19937_64& rng, double alpha) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    const double a = gamma(rng);
    const double b = gamma(rng);
    const double s = a + b;
    if (s <= 0.0) return 0.5;  // vanishingly unlikely; keep the blend well-defined
    return a / s;
}

bool has_fixed_point(const std::vector<int>& perm) {
    for (int i = 0; i < static_cast<int>(perm.size()); ++i)
        if (perm[i] == i) return true;
    return false;
}

}  // namespace

MixedBatch build_mixed_batch(const std::vector<Image>& images, const PseudoLabelSet& labels,
                             std::mt19937_64& rng, double alpha, int num_classes) {
    if (labels.indices.size() != labels.labels.size())
        throw std::invalid_argument("build_mixed_batch: malformed pseudo-label set");
    if (alpha <= 0.0) throw std::invalid_argument("build_mixed_batch: alpha must be > 0");

    MixedBatch out;
    const int m = static_cast<int>(labels.indices.size());
    if (m < 2) {
        out.soft_labels = Tensor(0, num_classes);
        return out;
    }

    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    if (has_fixed_point(perm)) std::shuffle(perm.begin(), perm.end(), rng);

    out.soft_labels = Tensor(m, num_classes, 0.0);
    for (int r = 0; r < m; ++r) {
        const int i = labels.indices[r];
        const int j = labels.indices[perm[r]];
        const double lam = draw_beta(rng, alpha);

        const Image& xi = images[i];
        const Image& xj = images[j];
        Image blended(xi.height, xi.width, xi.channels);
        for (std::size_t p = 0; p < blended.data.size(); ++p)
            blended.data[p] = lam * xi.data[p] + (1.0 - lam) * xj.data[p];
        out.images.push_back(std::move(blended));

        out.soft_labels.at(r, labels.labels[r]) += lam;
        out.soft_labels.at(r, labels.labels[perm[r]]) += 1.0 - lam;
        out.lambdas.push_back(lam);
    }
    return out;
}

double interpolation_consistency_loss(const Tensor& mixed_probs, const Tensor& soft_labels) {
    if (mixed_probs.n_rows != soft_labels.n_rows || mixed_probs.n_cols != soft_labels.n_cols)
        throw std::invalid_argument("interpolation_consistency_loss: shape mismatch " +
                                    mixed_probs.shape_str() + " vs " + soft_labels.shape_str());
    if (mixed_probs.n_rows == 0) return 0.0;
    double acc = 0.0;
    for (int i = 0; i < mixed_probs.n_rows; ++i)
        for (int k = 0; k < mixed_probs.n_cols; ++k) {
            const double y = soft_labels.at(i, k);
            if (y > 0.0) acc -= y * std::log(std::max(mixed_probs.at(i, k), Graph::kLogClampFloor));
        }
    return acc / mixed_probs.n_rows;
}

Var entropy_only_node(Graph& g, Var probs) {
    Var logp = g.log(g.clamp_min(probs, Graph::kLogClampFloor));
    Var per_sample = g.sum(g.mul(probs, logp), 1);  // [B, 1] rows of -H(p_i)
    return g.scale(g.mean(per_sample, 0), -1.0);    // [1, 1]
}

Var mutual_info_node(Graph& g, Var probs) {
    Var mean_h = entropy_only_node(g, probs);
    Var mean_p = g.mean(probs, 0);  // [1, K]
    Var h_of_mean = g.scale(
        g.sum(g.mul(mean_p, g.log(g.clamp_min(mean_p, Graph::kLogClampFloor))), 1), -1.0);
    return g.add(mean_h, g.scale(h_of_mean, -1.0));
}

Var soft_cross_entropy_node(Graph& g, Var probs, const Tensor& soft_labels) {
    const Tensor& p = g.value(probs);
    if (p.n_rows != soft_labels.n_rows || p.n_cols != soft_labels.n_cols)
        throw std::invalid_argument("soft_cross_entropy_node: shape mismatch " + p.shape_str() +
                                    " vs " + soft_labels.shape_str());
    Var y = g.leaf(soft_labels, false);
    Var logp = g.log(g.clamp_min(probs, Graph::kLogClampFloor));
    return g.scale(g.mean(g.sum(g.mul(y, logp), 1), 0), -1.0);
}

Var combined_node(Graph& g, Var loss_mi, Var loss_ic, double beta) {
    return g.add(loss_mi, g.scale(loss_ic, beta));
}

}  // namespace paint

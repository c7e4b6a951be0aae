#include "paint/adapter.hpp"

#include <algorithm>
#include <stdexcept>

namespace paint {

void AdaptationConfig::validate() const {
    if (eta < -1.0 || eta > 1.0) throw std::invalid_argument("config: eta must lie in [-1, 1]");
    if (phi < 0.0 || phi > 1.0) throw std::invalid_argument("config: phi must lie in [0, 1]");
    if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("config: gamma must lie in [0, 1]");
    if (beta < 0.0) throw std::invalid_argument("config: beta must be >= 0");
    if (alpha <= 0.0) throw std::invalid_argument("config: alpha must be > 0");
    if (prompt_len < 1) throw std::invalid_argument("config: prompt_len must be >= 1");
    if (shallow_blocks < 0) throw std::invalid_argument("config: shallow_blocks must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be > 0");
}

AdapterState AdapterState::init(const EncoderParams& source, unsigned long long seed) {
    AdapterState state;
    state.live = source;
    state.frozen = snapshot_source(source);
    state.rng.seed(seed);
    return state;
}

namespace {

// Fold per-sample probability rows into one [B, K] node.
Var concat_all(Graph& g, const std::vector<Var>& rows) {
    if (rows.size() == 1) return rows[0];
    return g.concat(rows);
}

std::vector<TrainableBinding> collect_bindings(AdapterState& state, const EncoderVars& vars) {
    std::vector<TrainableBinding> bindings;
    std::size_t k = 0;
    visit_params(state.live, [&](const std::string& name, Tensor& t, int) {
        if (vars.trainable[k]) bindings.push_back({name, &t, vars.flat[k]});
        ++k;
    });
    return bindings;
}

}  // namespace

Tensor extract_batch_queries(const std::vector<Image>& batch, const AdapterState& state) {
    const int dim = state.frozen.arch.dim;
    Tensor queries(static_cast<int>(batch.size()), dim);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor q = extract_query(state.frozen, embed_patches(batch[i], state.frozen));
        for (int c = 0; c < dim; ++c) queries.at(static_cast<int>(i), c) = q.at(0, c);
    }
    return queries;
}

void sgd_step(AdapterState& state, Graph& g, const std::vector<TrainableBinding>& trainables,
              double lr) {
    for (const auto& b : trainables) {
        const Tensor& grad = g.grad(b.var);
        if (!grad.all_finite())
            throw std::runtime_error("sgd_step: non-finite gradient for " + b.name);
        if (grad.n_rows != b.target->n_rows || grad.n_cols != b.target->n_cols)
            throw std::runtime_error("sgd_step: gradient shape " + grad.shape_str() +
                                     " does not match parameter " + b.name);
    }
    for (const auto& b : trainables)
        for (std::size_t i = 0; i < b.target->data.size(); ++i)
            b.target->data[i] -= lr * g.grad(b.var).data[i];
    ++state.sgd_calls;
}

AdaptGraph build_adaptation_graph(const std::vector<Image>& batch, AdapterState& state,
                                  const AdaptationConfig& config, const AdaptOptions& options,
                                  int selected_entry) {
    if (batch.empty()) throw std::invalid_argument("adapt: empty batch");
    if (selected_entry < 0 || selected_entry >= state.memory.size())
        throw std::invalid_argument("adapt: invalid prompt entry " + std::to_string(selected_entry));

    AdaptGraph ag;
    const EncoderArch& arch = state.live.arch;
    const int num_classes = arch.num_classes;

    // The config owns S; the params field only caches it for lifting.
    state.live.shallow_blocks = std::min(config.shallow_blocks, arch.num_blocks);
    EncoderVars vars = lift_params(
        ag.g, state.live, options.update_blocks ? TrainScope::adaptation : TrainScope::none);
    PromptEntry& entry = state.memory.entries[selected_entry];
    Var prompt = ag.g.leaf(entry.value, options.update_prompt);

    std::vector<Var> rows;
    rows.reserve(batch.size());
    for (const Image& img : batch) {
        ForwardResult fr =
            forward_from_patches(ag.g, vars, arch, flatten_patches(img, arch), prompt);
        rows.push_back(fr.probs);
    }
    ag.probs_matrix = concat_all(ag.g, rows);

    // Pseudo-labels come from these same pre-update probabilities; the mixed
    // images and blended labels enter the graph as constants, so the loss
    // stays differentiable in the parameters.
    const Tensor pre_update_probs = ag.g.value(ag.probs_matrix);
    const PseudoLabelSet labels = assign_pseudo_labels(pre_update_probs, config.phi);
    const MixedBatch mixed = build_mixed_batch(batch, labels, state.rng, config.alpha, num_classes);
    ag.pseudo_label_count = static_cast<int>(labels.indices.size());
    ag.mixed_count = mixed.size();

    Var loss_mi = mutual_info_node(ag.g, ag.probs_matrix);
    ag.loss_mi = ag.g.value(loss_mi).item();

    if (!mixed.empty()) {
        std::vector<Var> mixed_rows;
        mixed_rows.reserve(mixed.images.size());
        for (const Image& img : mixed.images) {
            ForwardResult fr =
                forward_from_patches(ag.g, vars, arch, flatten_patches(img, arch), prompt);
            mixed_rows.push_back(fr.probs);
        }
        Var mixed_probs = concat_all(ag.g, mixed_rows);
        Var loss_ic = soft_cross_entropy_node(ag.g, mixed_probs, mixed.soft_labels);
        ag.loss_ic = ag.g.value(loss_ic).item();
        ag.loss = combined_node(ag.g, loss_mi, loss_ic, config.beta);
    } else {
        ag.loss_ic = 0.0;
        ag.loss = loss_mi;
    }
    ag.loss_total = ag.g.value(ag.loss).item();

    ag.bindings = collect_bindings(state, vars);
    if (options.update_prompt)
        ag.bindings.push_back({"prompt." + std::to_string(selected_entry), &entry.value, prompt});
    return ag;
}

BatchOutcome adapt_batch(const std::vector<Image>& batch, AdapterState& state,
                         const AdaptationConfig& config, const AdaptOptions& options,
                         const SelectionOverride* override_selection) {
    if (batch.empty()) throw std::invalid_argument("adapt: empty batch");
    config.validate();
    const EncoderArch& arch = state.live.arch;

    const Tensor queries = extract_batch_queries(batch, state);

    Selection sel;
    if (override_selection != nullptr) {
        if (override_selection->allocate_new) {
            sel.index = allocate(state.memory, queries, state.rng, config.prompt_len, arch.dim,
                                 state.batch_index);
            sel.was_new = true;
        } else {
            if (override_selection->entry_index < 0 ||
                override_selection->entry_index >= state.memory.size())
                throw std::invalid_argument("adapt: override names a missing entry");
            sel.index = override_selection->entry_index;
            sel.was_new = false;
        }
    } else {
        sel = select_or_allocate(state.memory, queries, config.eta, state.rng, config.prompt_len,
                                 arch.dim, state.batch_index);
    }

    AdaptGraph ag = build_adaptation_graph(batch, state, config, options, sel.index);
    ag.g.backward(ag.loss);
    sgd_step(state, ag.g, ag.bindings, config.lr);

    if (!sel.was_new) update_key(state.memory.entries[sel.index], queries, config.gamma);

    BatchOutcome outcome;
    outcome.selected_entry = sel.index;
    outcome.was_new = sel.was_new;
    outcome.reliability = sel.reliability;
    outcome.loss_mi = ag.loss_mi;
    outcome.loss_ic = ag.loss_ic;
    outcome.loss_total = ag.loss_total;
    outcome.pseudo_label_count = ag.pseudo_label_count;
    outcome.predictions = predict(batch, sel.index, state);
    outcome.prompt_count_after = state.memory.size();
    ++state.batch_index;
    return outcome;
}

BatchOutcome entropy_only_batch(const std::vector<Image>& batch, AdapterState& state,
                                const AdaptationConfig& config) {
    if (batch.empty()) throw std::invalid_argument("adapt: empty batch");
    config.validate();
    const EncoderArch& arch = state.live.arch;

    state.live.shallow_blocks = std::min(config.shallow_blocks, arch.num_blocks);
    Graph g;
    EncoderVars vars = lift_params(g, state.live, TrainScope::adaptation);
    std::vector<Var> rows;
    rows.reserve(batch.size());
    for (const Image& img : batch) {
        ForwardResult fr =
            forward_from_patches(g, vars, arch, flatten_patches(img, arch), std::nullopt);
        rows.push_back(fr.probs);
    }
    Var probs_matrix = concat_all(g, rows);
    Var loss = entropy_only_node(g, probs_matrix);
    g.backward(loss);

    std::vector<TrainableBinding> bindings = collect_bindings(state, vars);
    const double loss_value = g.value(loss).item();
    sgd_step(state, g, bindings, config.lr);

    BatchOutcome outcome;
    outcome.loss_total = loss_value;
    outcome.predictions = predict(batch, -1, state);
    outcome.prompt_count_after = state.memory.size();
    ++state.batch_index;
    return outcome;
}

std::vector<int> predict(const std::vector<Image>& batch, int prompt_index,
                         const AdapterState& state) {
    std::optional<Tensor> prompt;
    if (prompt_index >= 0) {
        if (prompt_index >= state.memory.size())
            throw std::invalid_argument("predict: invalid prompt entry " +
                                        std::to_string(prompt_index));
        prompt = state.memory.entries[prompt_index].value;
    }
    std::vector<int> preds;
    preds.reserve(batch.size());
    for (const Image& img : batch) {
        const Prediction p = forward_prompted(state.live, embed_patches(img, state.live), prompt);
        preds.push_back(argmax_row(p.probs, 0));
    }
    return preds;
}

}  // namespace paint

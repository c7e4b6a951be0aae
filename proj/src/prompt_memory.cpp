#include "paint/prompt_memory.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "paint/checkpoint.hpp"

namespace paint {

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine: length mismatch " + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()));
    const double na = norm2(a);
    const double nb = norm2(b);
    if (!(na > 0.0) || !(nb > 0.0))
        throw std::invalid_argument("cosine: zero-norm input");
    return dot(a, b) / (na * nb);
}

double cosine(const Tensor& a, const Tensor& b) {
    if (a.n_rows != 1 || b.n_rows != 1)
        throw std::invalid_argument("cosine: expected single-row vectors, got " + a.shape_str() +
                                    " and " + b.shape_str());
    return cosine(a.row_span(0), b.row_span(0));
}

int retrieve(const Tensor& query, const PromptMemory& memory) {
    if (memory.empty()) throw std::runtime_error("retrieve: no entries (caller must allocate)");
    int best = 0;
    double best_score = cosine(query.row_span(0), memory.entries[0].key.row_span(0));
    for (int j = 1; j < memory.size(); ++j) {
        const double s = cosine(query.row_span(0), memory.entries[j].key.row_span(0));
        if (s > best_score) {  // strict: ties keep the lower index
            best_score = s;
            best = j;
        }
    }
    return best;
}

int vote(const std::vector<int>& per_sample_choices) {
    if (per_sample_choices.empty()) throw std::invalid_argument("vote: empty choice list");
    int max_choice = 0;
    for (int c : per_sample_choices) {
        if (c < 0) throw std::invalid_argument("vote: negative index");
        max_choice = std::max(max_choice, c);
    }
    std::vector<int> counts(static_cast<std::size_t>(max_choice) + 1, 0);
    for (int c : per_sample_choices) ++counts[c];
    int winner = 0;
    for (int j = 1; j <= max_choice; ++j)
        if (counts[j] > counts[winner]) winner = j;  // strict: ties keep the lower index
    return winner;
}

double reliability(const Tensor& queries, const Tensor& winning_key) {
    if (queries.n_rows < 1) throw std::invalid_argument("reliability: empty query batch");
    double acc = 0.0;
    for (int i = 0; i < queries.n_rows; ++i)
        acc += cosine(queries.row_span(i), winning_key.row_span(0));
    return acc / queries.n_rows;
}

int allocate(PromptMemory& memory, const Tensor& queries, std::mt19937_64& rng, int prompt_len,
             int dim, int created_at, double init_range) {
    if (queries.n_rows < 1) throw std::invalid_argument("allocate: empty query batch");
    if (queries.n_cols != dim)
        throw std::invalid_argument("allocate: query width " + queries.shape_str() +
                                    " does not match dim " + std::to_string(dim));
    if (prompt_len < 1) throw std::invalid_argument("allocate: prompt_len must be >= 1");

    PromptEntry entry;
    entry.key = kernels::mean_axis(queries, 0);
    if (!(norm2(entry.key.row_span(0)) > 0.0))
        throw std::invalid_argument("allocate: mean query has zero norm");

    std::uniform_real_distribution<double> dist(-init_range, init_range);
    entry.value = Tensor(prompt_len, dim);
    for (auto& v : entry.value.data) v = dist(rng);
    entry.created_at = created_at;
    entry.update_count = 0;
    memory.entries.push_back(std::move(entry));
    return memory.size() - 1;
}

Selection select_or_allocate(PromptMemory& memory, const Tensor& queries, double eta,
                             std::mt19937_64& rng, int prompt_len, int dim, int created_at) {
    Selection sel;
    if (memory.empty()) {
        sel.index = allocate(memory, queries, rng, prompt_len, dim, created_at);
        sel.was_new = true;
        return sel;
    }
    std::vector<int> choices(queries.n_rows);
    for (int i = 0; i < queries.n_rows; ++i) {
        Tensor q(1, queries.n_cols);
        for (int c = 0; c < queries.n_cols; ++c) q.at(0, c) = queries.at(i, c);
        choices[i] = retrieve(q, memory);
    }
    const int voted = vote(choices);
    const double r = reliability(queries, memory.entries[voted].key);
    if (r < eta) {
        sel.index = allocate(memory, queries, rng, prompt_len, dim, created_at);
        sel.was_new = true;
        return sel;
    }
    sel.index = voted;
    sel.was_new = false;
    sel.reliability = r;
    return sel;
}

void update_key(PromptEntry& entry, const Tensor& queries, double gamma) {
    const Tensor mean_q = kernels::mean_axis(queries, 0);
    if (mean_q.n_cols != entry.key.n_cols)
        throw std::invalid_argument("update_key: query width " + queries.shape_str() +
                                    " does not match key " + entry.key.shape_str());
    for (int c = 0; c < entry.key.n_cols; ++c)
        entry.key.at(0, c) = gamma * entry.key.at(0, c) + (1.0 - gamma) * mean_q.at(0, c);
    ++entry.update_count;
}

void save_memory(const std::filesystem::path& stem, const PromptMemory& memory) {
    nlohmann::json meta;
    meta["kind"] = "prompt-memory";
    nlohmann::json entries = nlohmann::json::array();
    std::vector<NamedTensor> tensors;
    for (int j = 0; j < memory.size(); ++j) {
        const auto& e = memory.entries[j];
        entries.push_back({{"created_at", e.created_at}, {"update_count", e.update_count}});
        tensors.push_back({"entry." + std::to_string(j) + ".key", e.key});
        tensors.push_back({"entry." + std::to_string(j) + ".value", e.value});
    }
    meta["entries"] = std::move(entries);
    save_tensors(stem, meta, tensors);
}

PromptMemory load_memory(const std::filesystem::path& stem) {
    LoadedCheckpoint ck = load_tensors(stem);
    if (ck.metadata.value("kind", "") != std::string("prompt-memory"))
        throw std::runtime_error("checkpoint: not a prompt-memory checkpoint: " + stem.string());
    PromptMemory memory;
    const auto& entries = ck.metadata.at("entries");
    for (int j = 0; j < static_cast<int>(entries.size()); ++j) {
        PromptEntry e;
        e.key = ck.find("entry." + std::to_string(j) + ".key");
        e.value = ck.find("entry." + std::to_string(j) + ".value");
        e.created_at = entries[j].at("created_at").get<int>();
        e.update_count = entries[j].at("update_count").get<int>();
        memory.entries.push_back(std::move(e));
    }
    return memory;
}

std::uint64_t memory_fingerprint(const PromptMemory& memory) {
    std::vector<NamedTensor> tensors;
    for (int j = 0; j < memory.size(); ++j) {
        tensors.push_back({"entry." + std::to_string(j) + ".key", memory.entries[j].key});
        tensors.push_back({"entry." + std::to_string(j) + ".value", memory.entries[j].value});
    }
    return fingerprint(tensors);
}

}  // namespace paint

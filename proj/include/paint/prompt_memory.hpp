#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "paint/tensor.hpp"

namespace paint {

// Growable key-value buffer of domain prompts.  Keys live in feature space
// and move only by moving average; values are the learnable prompt tokens.

struct PromptEntry {
    Tensor key;    // [1, dim] — nonzero norm by construction
    Tensor value;  // [prompt_len, dim]
    int created_at = 0;  // batch index at allocation
    int update_count = 0;
};

struct PromptMemory {
    std::vector<PromptEntry> entries;  // append-only; never removed or reordered

    int size() const { return static_cast<int>(entries.size()); }
    bool empty() const { return entries.empty(); }
};

// Cosine similarity; rejects zero-norm inputs.
double cosine(std::span<const double> a, std::span<const double> b);
double cosine(const Tensor& a, const Tensor& b);  // both [1, dim]

// Index of the entry whose key best matches the query (ties -> lowest index).
// Throws if the memory is empty: the caller must allocate instead.
int retrieve(const Tensor& query, const PromptMemory& memory);

// Majority winner among per-sample retrieval choices (ties -> lowest index).
int vote(const std::vector<int>& per_sample_choices);

// Mean cosine between each query row and the winning key.
double reliability(const Tensor& queries, const Tensor& winning_key);

// Appends a new entry: key = mean query row, value ~ U[-init_range, init_range]
// i.i.d. from rng.  Rejects an all-zero mean query.  Returns the new index.
int allocate(PromptMemory& memory, const Tensor& queries, std::mt19937_64& rng, int prompt_len,
             int dim, int created_at, double init_range = 0.02);

struct Selection {
    int index = -1;
    bool was_new = false;
    std::optional<double> reliability;  // absent when a new entry was allocated
};

// Empty memory -> allocate.  Otherwise retrieve per sample, vote, and score
// reliability; below eta the vote is distrusted and a fresh entry is made.
Selection select_or_allocate(PromptMemory& memory, const Tensor& queries, double eta,
                             std::mt19937_64& rng, int prompt_len, int dim, int created_at);

// k <- gamma * k + (1 - gamma) * mean(queries); bumps update_count.
void update_key(PromptEntry& entry, const Tensor& queries, double gamma);

// Serialization in the shared manifest+blob checkpoint format.
void save_memory(const std::filesystem::path& stem, const PromptMemory& memory);
PromptMemory load_memory(const std::filesystem::path& stem);
std::uint64_t memory_fingerprint(const PromptMemory& memory);

}  // namespace paint

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ihan/rng.hpp"
#include "ihan/tape.hpp"
#include "ihan/tensor.hpp"

namespace ihan {

enum class CodeType { diag, proc, lab, rx };

inline constexpr std::array<CodeType, 4> kAllCodeTypes{CodeType::diag, CodeType::proc,
                                                       CodeType::lab, CodeType::rx};

const char* to_string(CodeType t);
std::optional<CodeType> code_type_from_string(std::string_view s);

// "lab:2160-0_H" -- prefix used when all types share one vocabulary, so code
// strings from different systems cannot collide.
std::string namespaced_code(CodeType t, std::string_view code);

// Frozen map between code strings and dense indices. Codes below the
// frequency threshold, and anything unseen at build time, map to a reserved
// UNK index placed after all assigned codes.
class Vocabulary {
public:
    // Keeps codes of `type` whose corpus frequency is >= min_count, indexed in
    // first-appearance order. An empty corpus yields a vocabulary of only UNK.
    static Vocabulary build(const std::vector<std::pair<CodeType, std::string>>& corpus,
                            CodeType type, int min_count = 1);

    // One vocabulary over all types; entries are namespaced "type:code".
    static Vocabulary build_shared(const std::vector<std::pair<CodeType, std::string>>& corpus,
                                   int min_count = 1);

    // Reassemble from checkpoint parts. `codes` excludes the UNK slot.
    static Vocabulary from_parts(std::optional<CodeType> type, std::vector<std::string> codes,
                                 int min_count);

    int lookup(std::string_view code) const;
    const std::string& code_at(int index) const; // UNK index yields "<UNK>"
    int size() const { return static_cast<int>(index_to_code_.size()) + 1; }
    int unk_index() const { return static_cast<int>(index_to_code_.size()); }
    bool is_unk(int index) const { return index == unk_index(); }

    // nullopt for a shared (namespaced) vocabulary
    std::optional<CodeType> type() const { return type_; }
    int min_count() const { return min_count_; }
    const std::vector<std::string>& codes() const { return index_to_code_; }

private:
    std::optional<CodeType> type_;
    int min_count_ = 1;
    std::unordered_map<std::string, int> code_to_index_;
    std::vector<std::string> index_to_code_;
};

// Dense code embeddings; column v is the vector for code index v, so a lookup
// equals multiplying the weight matrix by a one-hot column.
struct EmbeddingMatrix {
    Tensor weights; // dim x vocab_size

    static EmbeddingMatrix init(int dim, int vocab_size, Rng& rng);

    int dim() const { return weights.rows(); }
    int vocab_size() const { return weights.cols(); }
};

// Embedding of one code as a dim x 1 tape node; the gradient reaches only the
// column the code maps to. Unseen codes hit the UNK column.
Var embed(Tape& tape, const Vocabulary& vocab, Var emb_weights, std::string_view code);

} // namespace ihan

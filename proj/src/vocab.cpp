#include "ihan/vocab.hpp"

#include <cmath>
#include <iostream>

#include "ihan/errors.hpp"

namespace ihan {

const char* to_string(CodeType t) {
    switch (t) {
        case CodeType::diag: return "diag";
        case CodeType::proc: return "proc";
        case CodeType::lab: return "lab";
        case CodeType::rx: return "rx";
    }
    return "?";
}

std::optional<CodeType> code_type_from_string(std::string_view s) {
    if (s == "diag") return CodeType::diag;
    if (s == "proc") return CodeType::proc;
    if (s == "lab") return CodeType::lab;
    if (s == "rx") return CodeType::rx;
    return std::nullopt;
}

std::string namespaced_code(CodeType t, std::string_view code) {
    std::string out = to_string(t);
    out += ':';
    out += code;
    return out;
}

namespace {

Vocabulary build_from_stream(std::optional<CodeType> type, int min_count,
                             const std::vector<std::string>& stream) {
    std::unordered_map<std::string, int> counts;
    for (const std::string& code : stream) ++counts[code];
    std::vector<std::string> kept;
    std::unordered_map<std::string, int> index;
    for (const std::string& code : stream) {
        if (counts[code] < min_count || index.count(code)) continue;
        index.emplace(code, static_cast<int>(kept.size()));
        kept.push_back(code);
    }
    if (kept.empty()) {
        std::cerr << "warning: vocabulary for " << (type ? to_string(*type) : "shared")
                  << " codes is empty, everything will map to UNK\n";
    }
    return Vocabulary::from_parts(type, std::move(kept), min_count);
}

} // namespace

Vocabulary Vocabulary::build(const std::vector<std::pair<CodeType, std::string>>& corpus,
                             CodeType type, int min_count) {
    std::vector<std::string> stream;
    stream.reserve(corpus.size());
    for (const auto& [t, code] : corpus) {
        if (t == type) stream.push_back(code);
    }
    return build_from_stream(type, min_count, stream);
}

Vocabulary Vocabulary::build_shared(const std::vector<std::pair<CodeType, std::string>>& corpus,
                                    int min_count) {
    std::vector<std::string> stream;
    stream.reserve(corpus.size());
    for (const auto& [t, code] : corpus) stream.push_back(namespaced_code(t, code));
    return build_from_stream(std::nullopt, min_count, stream);
}

Vocabulary Vocabulary::from_parts(std::optional<CodeType> type, std::vector<std::string> codes,
                                  int min_count) {
    Vocabulary v;
    v.type_ = type;
    v.min_count_ = min_count;
    v.index_to_code_ = std::move(codes);
    v.code_to_index_.reserve(v.index_to_code_.size());
    for (std::size_t i = 0; i < v.index_to_code_.size(); ++i) {
        auto [it, inserted] = v.code_to_index_.emplace(v.index_to_code_[i], static_cast<int>(i));
        if (!inserted) {
            throw ConsistencyError("vocabulary: duplicate code '" + v.index_to_code_[i] + "'");
        }
    }
    return v;
}

int Vocabulary::lookup(std::string_view code) const {
    auto it = code_to_index_.find(std::string(code));
    return it == code_to_index_.end() ? unk_index() : it->second;
}

const std::string& Vocabulary::code_at(int index) const {
    static const std::string unk = "<UNK>";
    if (index == unk_index()) return unk;
    if (index < 0 || index > unk_index()) {
        throw ConsistencyError("vocabulary: index " + std::to_string(index) + " out of range, size " +
                               std::to_string(size()));
    }
    return index_to_code_[index];
}

EmbeddingMatrix EmbeddingMatrix::init(int dim, int vocab_size, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    EmbeddingMatrix m;
    m.weights = Tensor(dim, vocab_size);
    for (int i = 0; i < m.weights.size(); ++i) m.weights[i] = rng.uniform(-bound, bound);
    return m;
}

Var embed(Tape& tape, const Vocabulary& vocab, Var emb_weights, std::string_view code) {
    if (emb_weights.cols != vocab.size()) {
        throw DimensionError("embed: weights " + tape.value(emb_weights).shape_str() +
                             " vs vocabulary size " + std::to_string(vocab.size()));
    }
    return tape.pick_col(emb_weights, vocab.lookup(code));
}

} // namespace ihan

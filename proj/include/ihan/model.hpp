#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ihan/gru.hpp"
#include "ihan/record.hpp"
#include "ihan/rng.hpp"
#include "ihan/tape.hpp"
#include "ihan/vocab.hpp"

namespace ihan {

// How codes of different types are combined into one prediction:
//   single_type    - one code type end to end
//   algorithm_comb - one encoder per type, fused by a type attention layer
//   data_comb      - all types concatenated per encounter under one shared
//                    namespaced vocabulary, then the single-type path
enum class FusionMode { single_type, algorithm_comb, data_comb };

const char* to_string(FusionMode m);
std::optional<FusionMode> fusion_mode_from_string(std::string_view s);

// Vocabularies backing a model: one per active type for algorithm_comb and
// single_type, a single shared one for data_comb.
struct VocabSet {
    FusionMode mode = FusionMode::single_type;
    std::vector<CodeType> active_types;
    std::vector<Vocabulary> vocabs;

    static VocabSet build(FusionMode mode, const std::vector<CodeType>& active_types,
                          const std::vector<PatientRecord>& corpus, int min_count = 1);
    int encoder_count() const { return static_cast<int>(vocabs.size()); }
};

// Parameters of one per-type encoder: embedding, code attention, GRU over the
// encounter sequence, visit attention.
struct SingleTypeParams {
    EmbeddingMatrix emb;  // d x V
    Tensor code_attn_w;   // 1 x d
    Tensor code_attn_b;   // 1 x 1
    GruParams gru;        // input d, hidden h
    Tensor visit_attn_w;  // 1 x h
    Tensor visit_attn_b;  // 1 x 1

    static SingleTypeParams init(int emb_dim, int hidden_dim, int vocab_size, Rng& rng);
    int embedding_dim() const { return emb.dim(); }
    int hidden_dim() const { return gru.hidden_dim(); }
};

// Full trainable state of one model configuration.
struct IhanParams {
    FusionMode mode = FusionMode::single_type;
    std::vector<CodeType> active_types;      // canonical enum order, deduped
    std::vector<SingleTypeParams> encoders;  // one per type (algorithm_comb) else one
    Tensor type_attn_w;                      // 1 x d, algorithm_comb only
    Tensor type_attn_b;                      // 1 x 1, algorithm_comb only
    Tensor head_w;                           // 1 x d
    Tensor head_b;                           // 1 x 1

    static IhanParams init(FusionMode mode, const std::vector<CodeType>& active_types,
                           int emb_dim, int hidden_dim, const VocabSet& vocabs, Rng& rng);

    bool has_type_attention() const { return mode == FusionMode::algorithm_comb; }
    int embedding_dim() const { return encoders.at(0).embedding_dim(); }
};

// Stable traversal of every trainable tensor; the order is the contract shared
// by the optimizer, gradient collection and the checkpoint format.
void visit_params(IhanParams& p, const std::function<void(const std::string&, Tensor&)>& f);
void visit_params(const IhanParams& p, const std::function<void(const std::string&, const Tensor&)>& f);
std::vector<Tensor*> param_tensors(IhanParams& p);

// --- attention trace ----------------------------------------------------

struct CodeTraceEntry {
    int code_index = 0;        // position within the source encounter
    double attn = 0.0;         // alpha^(c)
    double head_dot_emb = 0.0; // head row dotted with this code's embedding
};

struct EncounterTrace {
    int encounter_index = 0;   // position within patient.encounters
    std::vector<CodeTraceEntry> codes;
    double visit_attn = 0.0;   // alpha^(v)
    Tensor repr;               // v_j, d x 1
};

struct TypeTrace {
    std::optional<CodeType> type; // nullopt for the merged data_comb stream
    double type_attn = 1.0;       // alpha^(t); 1.0 when no type attention
    std::vector<EncounterTrace> encounters;
    Tensor member_repr;           // m_i, d x 1
};

// Everything captured during one forward pass; the raw material for the
// contribution decomposition.
struct AttentionTrace {
    FusionMode mode = FusionMode::single_type;
    std::vector<TypeTrace> types;
    Tensor member_repr; // m, d x 1
    double logit = 0.0; // head_w . m + head_b
    double y_hat = 0.0;
};

// --- forward pass ---------------------------------------------------------

struct SingleTypeVars {
    Var emb, code_attn_w, code_attn_b;
    GruVars gru;
    Var visit_attn_w, visit_attn_b;
};

struct IhanVars {
    std::vector<SingleTypeVars> encoders;
    Var type_attn_w, type_attn_b;
    Var head_w, head_b;
};

IhanVars bind_params(Tape& tape, const IhanParams& p);
// Gradients in the same order as visit_params / param_tensors.
std::vector<Tensor> collect_grads(const Tape& tape, const IhanParams& p, const IhanVars& v);

struct ForwardVars {
    Var y_hat; // 1 x 1
    Var logit; // 1 x 1
};

// Differentiable forward pass on an existing tape. Throws DegenerateInputError
// if the patient has no code of any active type.
ForwardVars forward_on_tape(Tape& tape, const IhanParams& params, const IhanVars& vars,
                            const VocabSet& vocabs, const PatientRecord& patient,
                            AttentionTrace* trace = nullptr);

struct ForwardOutput {
    double y_hat = 0.0;
    double logit = 0.0;
    AttentionTrace trace;
};

// Value-level forward pass (spins a private tape).
ForwardOutput forward(const IhanParams& params, const VocabSet& vocabs,
                      const PatientRecord& patient);

// --- single-encoder pieces, exposed for direct use and testing -------------

struct EncounterEncoding {
    Tensor repr; // v, d x 1
    std::vector<double> code_attn;
};

// Codes of one encounter -> attention-weighted sum of their embeddings.
// Invariant to the order of the codes. Throws DegenerateInputError on an
// empty list.
EncounterEncoding encode_encounter(const SingleTypeParams& params, const Vocabulary& vocab,
                                   const std::vector<std::string>& codes);

struct PatientEncoding {
    Tensor member_repr; // m, d x 1
    std::vector<double> visit_attn;
    std::vector<EncounterEncoding> encounters;
};

// Encounter code lists (date order) -> member representation. Visit scores
// come from the GRU hidden states; the weighted sum runs over the encounter
// representations themselves.
PatientEncoding encode_patient_single_type(const SingleTypeParams& params, const Vocabulary& vocab,
                                           const std::vector<std::vector<std::string>>& encounters);

} // namespace ihan

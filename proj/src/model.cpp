#include "ihan/model.hpp"

#include <algorithm>
#include <cmath>

#include "ihan/errors.hpp"

namespace ihan {

const char* to_string(FusionMode m) {
    switch (m) {
        case FusionMode::single_type: return "single_type";
        case FusionMode::algorithm_comb: return "algorithm_comb";
        case FusionMode::data_comb: return "data_comb";
    }
    return "?";
}

std::optional<FusionMode> fusion_mode_from_string(std::string_view s) {
    if (s == "single_type") return FusionMode::single_type;
    if (s == "algorithm_comb") return FusionMode::algorithm_comb;
    if (s == "data_comb") return FusionMode::data_comb;
    return std::nullopt;
}

namespace {

std::vector<CodeType> canonical_types(std::vector<CodeType> types) {
    std::sort(types.begin(), types.end());
    types.erase(std::unique(types.begin(), types.end()), types.end());
    return types;
}

Tensor uniform_row(int n, double bound, Rng& rng) {
    Tensor t(1, n);
    for (int i = 0; i < n; ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

} // namespace

VocabSet VocabSet::build(FusionMode mode, const std::vector<CodeType>& active_types,
                         const std::vector<PatientRecord>& corpus, int min_count) {
    VocabSet vs;
    vs.mode = mode;
    vs.active_types = canonical_types(active_types);
    if (vs.active_types.empty()) {
        throw ConfigError("vocab set: no active code types");
    }
    std::vector<std::pair<CodeType, std::string>> stream;
    for (const PatientRecord& p : corpus) {
        for (const Encounter& e : p.encounters) {
            for (const CodedEvent& c : e.codes) {
                if (std::find(vs.active_types.begin(), vs.active_types.end(), c.type) !=
                    vs.active_types.end()) {
                    stream.emplace_back(c.type, c.code);
                }
            }
        }
    }
    if (mode == FusionMode::data_comb) {
        vs.vocabs.push_back(Vocabulary::build_shared(stream, min_count));
    } else if (mode == FusionMode::algorithm_comb) {
        for (CodeType t : vs.active_types) {
            vs.vocabs.push_back(Vocabulary::build(stream, t, min_count));
        }
    } else {
        if (vs.active_types.size() != 1) {
            throw ConfigError("single_type mode needs exactly one active type, got " +
                              std::to_string(vs.active_types.size()));
        }
        vs.vocabs.push_back(Vocabulary::build(stream, vs.active_types[0], min_count));
    }
    return vs;
}

SingleTypeParams SingleTypeParams::init(int emb_dim, int hidden_dim, int vocab_size, Rng& rng) {
    SingleTypeParams p;
    p.emb = EmbeddingMatrix::init(emb_dim, vocab_size, rng);
    p.code_attn_w = uniform_row(emb_dim, 1.0 / std::sqrt(static_cast<double>(emb_dim)), rng);
    p.code_attn_b = Tensor(1, 1);
    p.gru = GruParams::init(emb_dim, hidden_dim, rng);
    // open update gates and give the candidate a positive bias so the hidden
    // state drifts with the step count from the start; visit attention can
    // then read sequence position before any content signal has formed
    p.gru.bz.fill(-0.5);
    p.gru.bn.fill(0.3);
    p.visit_attn_w = uniform_row(hidden_dim, 1.0 / std::sqrt(static_cast<double>(hidden_dim)), rng);
    p.visit_attn_b = Tensor(1, 1);
    return p;
}

IhanParams IhanParams::init(FusionMode mode, const std::vector<CodeType>& active_types,
                            int emb_dim, int hidden_dim, const VocabSet& vocabs, Rng& rng) {
    IhanParams p;
    p.mode = mode;
    p.active_types = canonical_types(active_types);
    if (vocabs.mode != mode || vocabs.active_types != p.active_types) {
        throw ConsistencyError("params/vocab set disagree on mode or active types");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(emb_dim));
    for (const Vocabulary& v : vocabs.vocabs) {
        p.encoders.push_back(SingleTypeParams::init(emb_dim, hidden_dim, v.size(), rng));
    }
    if (mode == FusionMode::algorithm_comb) {
        p.type_attn_w = uniform_row(emb_dim, bound, rng);
        p.type_attn_b = Tensor(1, 1);
    }
    p.head_w = uniform_row(emb_dim, bound, rng);
    p.head_b = Tensor(1, 1);
    return p;
}

namespace {

template <class Params, class Fn>
void visit_params_impl(Params& p, const Fn& f) {
    for (std::size_t i = 0; i < p.encoders.size(); ++i) {
        const std::string prefix =
            p.mode == FusionMode::algorithm_comb ? to_string(p.active_types[i]) : "shared";
        auto& e = p.encoders[i];
        f(prefix + ".emb", e.emb.weights);
        f(prefix + ".code_attn_w", e.code_attn_w);
        f(prefix + ".code_attn_b", e.code_attn_b);
        f(prefix + ".gru.Wr", e.gru.Wr);
        f(prefix + ".gru.Ur", e.gru.Ur);
        f(prefix + ".gru.br", e.gru.br);
        f(prefix + ".gru.Wz", e.gru.Wz);
        f(prefix + ".gru.Uz", e.gru.Uz);
        f(prefix + ".gru.bz", e.gru.bz);
        f(prefix + ".gru.Wn", e.gru.Wn);
        f(prefix + ".gru.Un", e.gru.Un);
        f(prefix + ".gru.bn", e.gru.bn);
        f(prefix + ".visit_attn_w", e.visit_attn_w);
        f(prefix + ".visit_attn_b", e.visit_attn_b);
    }
    if (p.mode == FusionMode::algorithm_comb) {
        f("type_attn.w", p.type_attn_w);
        f("type_attn.b", p.type_attn_b);
    }
    f("head.w", p.head_w);
    f("head.b", p.head_b);
}

} // namespace

void visit_params(IhanParams& p, const std::function<void(const std::string&, Tensor&)>& f) {
    visit_params_impl(p, f);
}

void visit_params(const IhanParams& p,
                  const std::function<void(const std::string&, const Tensor&)>& f) {
    visit_params_impl(p, f);
}

std::vector<Tensor*> param_tensors(IhanParams& p) {
    std::vector<Tensor*> out;
    visit_params(p, [&out](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

IhanVars bind_params(Tape& tape, const IhanParams& p) {
    IhanVars v;
    for (const SingleTypeParams& e : p.encoders) {
        SingleTypeVars sv;
        sv.emb = tape.leaf(e.emb.weights);
        sv.code_attn_w = tape.leaf(e.code_attn_w);
        sv.code_attn_b = tape.leaf(e.code_attn_b);
        sv.gru = bind_gru(tape, e.gru);
        sv.visit_attn_w = tape.leaf(e.visit_attn_w);
        sv.visit_attn_b = tape.leaf(e.visit_attn_b);
        v.encoders.push_back(sv);
    }
    if (p.has_type_attention()) {
        v.type_attn_w = tape.leaf(p.type_attn_w);
        v.type_attn_b = tape.leaf(p.type_attn_b);
    }
    v.head_w = tape.leaf(p.head_w);
    v.head_b = tape.leaf(p.head_b);
    return v;
}

std::vector<Tensor> collect_grads(const Tape& tape, const IhanParams& p, const IhanVars& v) {
    std::vector<Tensor> out;
    auto push = [&](Var var) { out.push_back(tape.grad(var)); };
    for (const SingleTypeVars& e : v.encoders) {
        push(e.emb);
        push(e.code_attn_w);
        push(e.code_attn_b);
        push(e.gru.Wr);
        push(e.gru.Ur);
        push(e.gru.br);
        push(e.gru.Wz);
        push(e.gru.Uz);
        push(e.gru.bz);
        push(e.gru.Wn);
        push(e.gru.Un);
        push(e.gru.bn);
        push(e.visit_attn_w);
        push(e.visit_attn_b);
    }
    if (p.has_type_attention()) {
        push(v.type_attn_w);
        push(v.type_attn_b);
    }
    push(v.head_w);
    push(v.head_b);
    return out;
}

namespace {

// one code occurrence routed to an encoder: where it sits in the record plus
// the string used for the vocabulary lookup
struct CodeItem {
    int code_index;
    std::string lookup;
};

struct EncounterItems {
    int encounter_index;
    std::vector<CodeItem> codes;
};

struct EncounterOnTape {
    Var repr;                // v_j
    Var code_attn;           // 1 x K
    std::vector<Var> embeddings;
};

EncounterOnTape encode_encounter_on_tape(Tape& tape, const SingleTypeVars& enc,
                                         const Vocabulary& vocab,
                                         const std::vector<CodeItem>& codes) {
    if (codes.empty()) {
        throw DegenerateInputError("encode_encounter: empty code list");
    }
    std::vector<Var> embs;
    std::vector<Var> scores;
    embs.reserve(codes.size());
    scores.reserve(codes.size());
    for (const CodeItem& c : codes) {
        Var e = embed(tape, vocab, enc.emb, c.lookup);
        embs.push_back(e);
        scores.push_back(tape.add(tape.matmul(enc.code_attn_w, e), enc.code_attn_b));
    }
    Var alpha = tape.masked_softmax(tape.concat_row(scores),
                                    std::vector<bool>(codes.size(), true));
    Var v = tape.matmul(tape.concat_cols(embs), tape.transpose(alpha));
    return EncounterOnTape{v, alpha, std::move(embs)};
}

struct PatientOnTape {
    Var member;              // m_i
    Var visit_attn;          // 1 x J
    std::vector<EncounterOnTape> encounters;
};

PatientOnTape encode_patient_on_tape(Tape& tape, const SingleTypeVars& enc,
                                     const Vocabulary& vocab,
                                     const std::vector<EncounterItems>& items, int hidden_dim) {
    if (items.empty()) {
        throw DegenerateInputError("encode_patient: no non-empty encounters");
    }
    std::vector<EncounterOnTape> encs;
    encs.reserve(items.size());
    for (const EncounterItems& it : items) {
        encs.push_back(encode_encounter_on_tape(tape, enc, vocab, it.codes));
    }
    Var h = tape.constant(Tensor(hidden_dim, 1));
    std::vector<Var> scores;
    scores.reserve(encs.size());
    for (const EncounterOnTape& e : encs) {
        h = gru_cell(tape, enc.gru, e.repr, h);
        scores.push_back(tape.add(tape.matmul(enc.visit_attn_w, h), enc.visit_attn_b));
    }
    Var alpha = tape.masked_softmax(tape.concat_row(scores),
                                    std::vector<bool>(encs.size(), true));
    std::vector<Var> reprs;
    reprs.reserve(encs.size());
    for (const EncounterOnTape& e : encs) reprs.push_back(e.repr);
    // weighted sum over the encounter representations, not the hidden states
    Var m = tape.matmul(tape.concat_cols(reprs), tape.transpose(alpha));
    return PatientOnTape{m, alpha, std::move(encs)};
}

// Encounters routed to one encoder, keeping only those with >= 1 code.
std::vector<EncounterItems> collect_items(const PatientRecord& patient,
                                          const std::vector<CodeType>& wanted, bool namespaced) {
    std::vector<EncounterItems> items;
    for (std::size_t j = 0; j < patient.encounters.size(); ++j) {
        const Encounter& e = patient.encounters[j];
        EncounterItems it;
        it.encounter_index = static_cast<int>(j);
        for (std::size_t k = 0; k < e.codes.size(); ++k) {
            const CodedEvent& c = e.codes[k];
            if (std::find(wanted.begin(), wanted.end(), c.type) == wanted.end()) continue;
            it.codes.push_back(CodeItem{static_cast<int>(k),
                                        namespaced ? namespaced_code(c.type, c.code) : c.code});
        }
        if (!it.codes.empty()) items.push_back(std::move(it));
    }
    return items;
}

void require_sorted_encounters(const PatientRecord& patient) {
    for (std::size_t j = 1; j < patient.encounters.size(); ++j) {
        if (!(patient.encounters[j - 1].date < patient.encounters[j].date)) {
            throw ConsistencyError("patient " + patient.patient_id +
                                   ": encounters not strictly date-ascending");
        }
    }
}

TypeTrace make_type_trace(const Tape& tape, const PatientOnTape& pt,
                          const std::vector<EncounterItems>& items,
                          std::optional<CodeType> type, const Tensor& head_w) {
    TypeTrace tt;
    tt.type = type;
    tt.member_repr = tape.value(pt.member);
    for (std::size_t j = 0; j < items.size(); ++j) {
        EncounterTrace et;
        et.encounter_index = items[j].encounter_index;
        et.visit_attn = tape.value(pt.visit_attn)(0, static_cast<int>(j));
        et.repr = tape.value(pt.encounters[j].repr);
        const Tensor& alpha = tape.value(pt.encounters[j].code_attn);
        for (std::size_t k = 0; k < items[j].codes.size(); ++k) {
            const Tensor& emb = tape.value(pt.encounters[j].embeddings[k]);
            double dot = 0.0;
            for (int d = 0; d < emb.rows(); ++d) dot += head_w(0, d) * emb(d, 0);
            et.codes.push_back(CodeTraceEntry{items[j].codes[k].code_index,
                                              alpha(0, static_cast<int>(k)), dot});
        }
        tt.encounters.push_back(std::move(et));
    }
    return tt;
}

} // namespace

ForwardVars forward_on_tape(Tape& tape, const IhanParams& params, const IhanVars& vars,
                            const VocabSet& vocabs, const PatientRecord& patient,
                            AttentionTrace* trace) {
    if (params.encoders.size() != vocabs.vocabs.size() || params.mode != vocabs.mode) {
        throw ConsistencyError("forward: params and vocab set disagree");
    }
    if (patient.encounters.empty()) {
        throw DegenerateInputError("forward: patient " + patient.patient_id + " has no encounters");
    }
    require_sorted_encounters(patient);

    const int hidden = params.encoders[0].hidden_dim();
    // copy: the tape's value store reallocates as the graph grows
    const Tensor head_w = tape.value(vars.head_w);
    if (trace) {
        trace->mode = params.mode;
        trace->types.clear();
    }

    Var member;
    if (params.mode == FusionMode::algorithm_comb) {
        std::vector<Var> members;
        std::vector<Var> scores;
        std::vector<std::size_t> present; // encoder indices with >= 1 code
        std::vector<PatientOnTape> pts;
        std::vector<std::vector<EncounterItems>> all_items;
        for (std::size_t i = 0; i < params.active_types.size(); ++i) {
            auto items = collect_items(patient, {params.active_types[i]}, false);
            if (items.empty()) continue;
            PatientOnTape pt =
                encode_patient_on_tape(tape, vars.encoders[i], vocabs.vocabs[i], items, hidden);
            members.push_back(pt.member);
            scores.push_back(tape.add(tape.matmul(vars.type_attn_w, pt.member), vars.type_attn_b));
            present.push_back(i);
            pts.push_back(std::move(pt));
            all_items.push_back(std::move(items));
        }
        if (members.empty()) {
            throw DegenerateInputError("forward: patient " + patient.patient_id +
                                       " has no code of any active type");
        }
        Var alpha_t = tape.masked_softmax(tape.concat_row(scores),
                                          std::vector<bool>(members.size(), true));
        member = tape.matmul(tape.concat_cols(members), tape.transpose(alpha_t));
        if (trace) {
            for (std::size_t n = 0; n < present.size(); ++n) {
                TypeTrace tt = make_type_trace(tape, pts[n], all_items[n],
                                               params.active_types[present[n]], head_w);
                tt.type_attn = tape.value(alpha_t)(0, static_cast<int>(n));
                trace->types.push_back(std::move(tt));
            }
        }
    } else {
        const bool namespaced = params.mode == FusionMode::data_comb;
        auto items = collect_items(patient, params.active_types, namespaced);
        if (items.empty()) {
            throw DegenerateInputError("forward: patient " + patient.patient_id +
                                       " has no code of any active type");
        }
        PatientOnTape pt =
            encode_patient_on_tape(tape, vars.encoders[0], vocabs.vocabs[0], items, hidden);
        member = pt.member;
        if (trace) {
            std::optional<CodeType> t;
            if (params.mode == FusionMode::single_type) t = params.active_types[0];
            TypeTrace tt = make_type_trace(tape, pt, items, t, head_w);
            tt.type_attn = 1.0;
            trace->types.push_back(std::move(tt));
        }
    }

    Var logit = tape.add(tape.matmul(vars.head_w, member), vars.head_b);
    Var y = tape.sigmoid(logit);
    if (trace) {
        trace->member_repr = tape.value(member);
        trace->logit = tape.scalar_value(logit);
        trace->y_hat = tape.scalar_value(y);
    }
    return ForwardVars{y, logit};
}

ForwardOutput forward(const IhanParams& params, const VocabSet& vocabs,
                      const PatientRecord& patient) {
    Tape tape;
    IhanVars vars = bind_params(tape, params);
    ForwardOutput out;
    ForwardVars fv = forward_on_tape(tape, params, vars, vocabs, patient, &out.trace);
    out.y_hat = tape.scalar_value(fv.y_hat);
    out.logit = tape.scalar_value(fv.logit);
    return out;
}

EncounterEncoding encode_encounter(const SingleTypeParams& params, const Vocabulary& vocab,
                                   const std::vector<std::string>& codes) {
    Tape tape;
    SingleTypeVars sv;
    sv.emb = tape.leaf(params.emb.weights);
    sv.code_attn_w = tape.leaf(params.code_attn_w);
    sv.code_attn_b = tape.leaf(params.code_attn_b);
    std::vector<CodeItem> items;
    for (std::size_t k = 0; k < codes.size(); ++k) {
        items.push_back(CodeItem{static_cast<int>(k), codes[k]});
    }
    EncounterOnTape enc = encode_encounter_on_tape(tape, sv, vocab, items);
    EncounterEncoding out;
    out.repr = tape.value(enc.repr);
    const Tensor& alpha = tape.value(enc.code_attn);
    out.code_attn.assign(alpha.data(), alpha.data() + alpha.size());
    return out;
}

PatientEncoding encode_patient_single_type(const SingleTypeParams& params, const Vocabulary& vocab,
                                           const std::vector<std::vector<std::string>>& encounters) {
    Tape tape;
    SingleTypeVars sv;
    sv.emb = tape.leaf(params.emb.weights);
    sv.code_attn_w = tape.leaf(params.code_attn_w);
    sv.code_attn_b = tape.leaf(params.code_attn_b);
    sv.gru = bind_gru(tape, params.gru);
    sv.visit_attn_w = tape.leaf(params.visit_attn_w);
    sv.visit_attn_b = tape.leaf(params.visit_attn_b);
    std::vector<EncounterItems> items;
    for (std::size_t j = 0; j < encounters.size(); ++j) {
        EncounterItems it;
        it.encounter_index = static_cast<int>(j);
        for (std::size_t k = 0; k < encounters[j].size(); ++k) {
            it.codes.push_back(CodeItem{static_cast<int>(k), encounters[j][k]});
        }
        if (!it.codes.empty()) items.push_back(std::move(it));
    }
    PatientOnTape pt = encode_patient_on_tape(tape, sv, vocab, items, params.hidden_dim());
    PatientEncoding out;
    out.member_repr = tape.value(pt.member);
    const Tensor& alpha = tape.value(pt.visit_attn);
    out.visit_attn.assign(alpha.data(), alpha.data() + alpha.size());
    for (const EncounterOnTape& e : pt.encounters) {
        EncounterEncoding ee;
        ee.repr = tape.value(e.repr);
        const Tensor& a = tape.value(e.code_attn);
        ee.code_attn.assign(a.data(), a.data() + a.size());
        out.encounters.push_back(std::move(ee));
    }
    return out;
}

} // namespace ihan

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>

#include "ihan/errors.hpp"
#include "ihan/rng.hpp"
#include "ihan/vocab.hpp"

using namespace ihan;

namespace {

std::vector<std::pair<CodeType, std::string>> diag_corpus(std::initializer_list<const char*> codes) {
    std::vector<std::pair<CodeType, std::string>> out;
    for (const char* c : codes) out.emplace_back(CodeType::diag, c);
    return out;
}

} // namespace

TEST_CASE("codes are indexed in first-appearance order with UNK last") {
    Vocabulary v = Vocabulary::build(diag_corpus({"A", "B", "A"}), CodeType::diag, 1);
    CHECK(v.size() == 3);
    CHECK(v.lookup("A") == 0);
    CHECK(v.lookup("B") == 1);
    CHECK(v.unk_index() == 2);
}

TEST_CASE("codes below the frequency threshold fall to UNK") {
    Vocabulary v = Vocabulary::build(diag_corpus({"A", "B", "A"}), CodeType::diag, 2);
    CHECK(v.size() == 2);
    CHECK(v.lookup("A") == 0);
    CHECK(v.lookup("B") == v.unk_index());
}

TEST_CASE("a corpus of 45937 unique codes yields size 45938 with UNK") {
    std::vector<std::pair<CodeType, std::string>> corpus;
    corpus.reserve(45937);
    for (int i = 0; i < 45937; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "D%05d", i);
        corpus.emplace_back(CodeType::diag, buf);
    }
    Vocabulary v = Vocabulary::build(corpus, CodeType::diag, 1);
    CHECK(v.size() == 45938);
}

TEST_CASE("build only considers codes of the requested type") {
    std::vector<std::pair<CodeType, std::string>> corpus{
        {CodeType::diag, "A"}, {CodeType::lab, "L"}, {CodeType::diag, "B"}};
    Vocabulary v = Vocabulary::build(corpus, CodeType::diag, 1);
    CHECK(v.size() == 3);
    CHECK(v.lookup("L") == v.unk_index());
}

TEST_CASE("empty corpus yields a vocabulary of only UNK") {
    Vocabulary v = Vocabulary::build({}, CodeType::rx, 1);
    CHECK(v.size() == 1);
    CHECK(v.unk_index() == 0);
    CHECK(v.lookup("anything") == 0);
    CHECK(v.code_at(0) == "<UNK>");
}

TEST_CASE("index -> code -> index is the identity off UNK") {
    Vocabulary v = Vocabulary::build(diag_corpus({"x", "y", "z", "x", "w"}), CodeType::diag, 1);
    for (int i = 0; i + 1 < v.size(); ++i) {
        CHECK(v.lookup(v.code_at(i)) == i);
    }
}

TEST_CASE("shared vocabulary namespaces by type so collisions cannot happen") {
    std::vector<std::pair<CodeType, std::string>> corpus{
        {CodeType::diag, "123"}, {CodeType::proc, "123"}, {CodeType::lab, "123"}};
    Vocabulary v = Vocabulary::build_shared(corpus, 1);
    CHECK(v.size() == 4);
    CHECK(v.lookup(namespaced_code(CodeType::diag, "123")) == 0);
    CHECK(v.lookup(namespaced_code(CodeType::proc, "123")) == 1);
    CHECK(v.lookup(namespaced_code(CodeType::lab, "123")) == 2);
    CHECK(v.lookup("123") == v.unk_index());
}

TEST_CASE("embed returns the looked-up column, UNK for unseen codes") {
    Vocabulary v = Vocabulary::build(diag_corpus({"A", "B"}), CodeType::diag, 1);
    Rng rng(3);
    EmbeddingMatrix emb = EmbeddingMatrix::init(4, v.size(), rng);

    Tape tape;
    Var w = tape.leaf(emb.weights);
    Var ea = embed(tape, v, w, "A");
    for (int i = 0; i < 4; ++i) CHECK(tape.value(ea)(i, 0) == emb.weights(i, 0));
    Var eu = embed(tape, v, w, "never-seen");
    for (int i = 0; i < 4; ++i) CHECK(tape.value(eu)(i, 0) == emb.weights(i, v.unk_index()));
}

TEST_CASE("embedding lookup equals multiplying by the one-hot vector exactly") {
    Vocabulary v = Vocabulary::build(diag_corpus({"A", "B", "C", "D"}), CodeType::diag, 1);
    Rng rng(11);
    EmbeddingMatrix emb = EmbeddingMatrix::init(6, v.size(), rng);
    for (const char* code : {"A", "B", "C", "D", "unseen"}) {
        Tape tape;
        Var w = tape.leaf(emb.weights);
        Var e = embed(tape, v, w, code);
        Tensor via_onehot = matmul(emb.weights, onehot(v.lookup(code), v.size()));
        CHECK(tape.value(e) == via_onehot);
    }
}

TEST_CASE("embed rejects a weight matrix of the wrong width") {
    Vocabulary v = Vocabulary::build(diag_corpus({"A", "B"}), CodeType::diag, 1);
    Rng rng(5);
    EmbeddingMatrix emb = EmbeddingMatrix::init(4, v.size() + 3, rng);
    Tape tape;
    Var w = tape.leaf(emb.weights);
    CHECK_THROWS_AS(embed(tape, v, w, "A"), DimensionError);
}

TEST_CASE("embedding gradient reaches only the looked-up column") {
    Vocabulary v = Vocabulary::build(diag_corpus({"A", "B", "C"}), CodeType::diag, 1);
    Rng rng(7);
    EmbeddingMatrix emb = EmbeddingMatrix::init(3, v.size(), rng);
    Tape tape;
    Var w = tape.leaf(emb.weights);
    Var e = embed(tape, v, w, "B");
    Var loss = tape.matmul(tape.constant(Tensor(1, 3, 1.0)), e);
    tape.backward(loss);
    const Tensor& g = tape.grad(w);
    for (int i = 0; i < g.rows(); ++i) {
        for (int j = 0; j < g.cols(); ++j) {
            CHECK(g(i, j) == (j == 1 ? 1.0 : 0.0));
        }
    }
}

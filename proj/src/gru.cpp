#include "ihan/gru.hpp"

#include "ihan/errors.hpp"

namespace ihan {

namespace {

Tensor uniform_init(int rows, int cols, double bound, Rng& rng) {
    Tensor t(rows, cols);
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

} // namespace

GruParams GruParams::init(int input_dim, int hidden_dim, Rng& rng) {
    const double bx = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double bh = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    GruParams p;
    p.Wr = uniform_init(hidden_dim, input_dim, bx, rng);
    p.Ur = uniform_init(hidden_dim, hidden_dim, bh, rng);
    p.br = Tensor(hidden_dim, 1);
    p.Wz = uniform_init(hidden_dim, input_dim, bx, rng);
    p.Uz = uniform_init(hidden_dim, hidden_dim, bh, rng);
    p.bz = Tensor(hidden_dim, 1);
    p.Wn = uniform_init(hidden_dim, input_dim, bx, rng);
    p.Un = uniform_init(hidden_dim, hidden_dim, bh, rng);
    p.bn = Tensor(hidden_dim, 1);
    return p;
}

GruVars bind_gru(Tape& tape, const GruParams& p) {
    GruVars g;
    g.Wr = tape.leaf(p.Wr);
    g.Ur = tape.leaf(p.Ur);
    g.br = tape.leaf(p.br);
    g.Wz = tape.leaf(p.Wz);
    g.Uz = tape.leaf(p.Uz);
    g.bz = tape.leaf(p.bz);
    g.Wn = tape.leaf(p.Wn);
    g.Un = tape.leaf(p.Un);
    g.bn = tape.leaf(p.bn);
    return g;
}

Var gru_cell(Tape& tape, const GruVars& g, Var x, Var h_prev) {
    if (x.cols != 1 || h_prev.cols != 1 || g.Wr.cols != x.rows || g.Ur.cols != h_prev.rows) {
        throw DimensionError("gru_cell: input " + tape.value(x).shape_str() + ", hidden " +
                             tape.value(h_prev).shape_str() + " inconsistent with weights " +
                             tape.value(g.Wr).shape_str() + "/" + tape.value(g.Ur).shape_str());
    }
    Var r = tape.sigmoid(tape.add(tape.add(tape.matmul(g.Wr, x), tape.matmul(g.Ur, h_prev)), g.br));
    Var z = tape.sigmoid(tape.add(tape.add(tape.matmul(g.Wz, x), tape.matmul(g.Uz, h_prev)), g.bz));
    Var rh = tape.hadamard(r, h_prev);
    Var n = tape.tanh_op(tape.add(tape.add(tape.matmul(g.Wn, x), tape.matmul(g.Un, rh)), g.bn));
    return tape.add(tape.hadamard(tape.one_minus(z), n), tape.hadamard(z, h_prev));
}

Tensor gru_cell_value(const GruParams& p, const Tensor& x, const Tensor& h_prev) {
    Tape tape;
    GruVars g = bind_gru(tape, p);
    Var h = gru_cell(tape, g, tape.constant(x), tape.constant(h_prev));
    return tape.value(h);
}

} // namespace ihan

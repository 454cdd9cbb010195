#pragma once

#include "ihan/rng.hpp"
#include "ihan/tape.hpp"
#include "ihan/tensor.hpp"

namespace ihan {

// Gated recurrent unit:
//   r  = sigmoid(Wr x + Ur h + br)
//   z  = sigmoid(Wz x + Uz h + bz)
//   n  = tanh(Wn x + Un (r .* h) + bn)
//   h' = (1 - z) .* n + z .* h
struct GruParams {
    Tensor Wr, Ur, br;
    Tensor Wz, Uz, bz;
    Tensor Wn, Un, bn;

    static GruParams init(int input_dim, int hidden_dim, Rng& rng);
    int input_dim() const { return Wr.cols(); }
    int hidden_dim() const { return Wr.rows(); }
};

struct GruVars {
    Var Wr, Ur, br;
    Var Wz, Uz, bz;
    Var Wn, Un, bn;
};

GruVars bind_gru(Tape& tape, const GruParams& p);

// One step; x is input_dim x 1, h_prev is hidden_dim x 1.
Var gru_cell(Tape& tape, const GruVars& g, Var x, Var h_prev);

// Value-only convenience used by tests and small tools.
Tensor gru_cell_value(const GruParams& p, const Tensor& x, const Tensor& h_prev);

} // namespace ihan

#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "amem/errors.hpp"

namespace amem {

template <typename Scalar>
using Embedding = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Memory and query embeddings. Every component is finite; zero vectors are
// rejected at encode time because cosine similarity is undefined for them.
using EmbeddingVector = Embedding<double>;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
    return v.allFinite();
}

// dot(a, b) / (|a| |b|). Symmetric and invariant to positive scaling of either side.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
    using Scalar = typename DerivedA::Scalar;
    static_assert(std::is_same_v<Scalar, typename DerivedB::Scalar>,
                  "cosine_similarity requires matching scalar types");
    if (a.size() != b.size()) {
        throw DimensionMismatch(a.size(), b.size());
    }
    const Scalar na = a.norm();
    const Scalar nb = b.norm();
    if (na == Scalar(0) || nb == Scalar(0)) {
        throw PreconditionError("cosine similarity is undefined for a zero vector");
    }
    return a.dot(b) / (na * nb);
}

}  // namespace amem

#pragma once

#include <Eigen/Core>
#include <cstddef>

namespace piwf {

// Row-major GEMM facade over Eigen: C = alpha * op(A) * op(B) + beta * C.
// Everything hot in the conv layers funnels through here.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Map = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
    using MapMut = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;

    const auto ai = static_cast<Eigen::Index>(trans_a ? k : m);
    const auto aj = static_cast<Eigen::Index>(trans_a ? m : k);
    const auto bi = static_cast<Eigen::Index>(trans_b ? n : k);
    const auto bj = static_cast<Eigen::Index>(trans_b ? k : n);

    Map A(a, ai, aj, Eigen::OuterStride<>(static_cast<Eigen::Index>(lda)));
    Map B(b, bi, bj, Eigen::OuterStride<>(static_cast<Eigen::Index>(ldb)));
    MapMut C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n),
             Eigen::OuterStride<>(static_cast<Eigen::Index>(ldc)));

    if (beta == T{0})
        C.setZero();
    else if (beta != T{1})
        C *= beta;

    if (!trans_a && !trans_b)
        C.noalias() += alpha * (A * B);
    else if (trans_a && !trans_b)
        C.noalias() += alpha * (A.transpose() * B);
    else if (!trans_a && trans_b)
        C.noalias() += alpha * (A * B.transpose());
    else
        C.noalias() += alpha * (A.transpose() * B.transpose());
}

}  // namespace piwf

#pragma once

#include "gradroute/core/ops_basic.hpp"

namespace gradroute {

namespace detail {

// C[m,n] += A[m,k] * B[k,n]
template <class T>
void gemm_nn(const T* A, const T* B, T* C, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const T* a = A + i * k;
        T* c = C + i * n;
        for (size_t l = 0; l < k; ++l) {
            T av = a[l];
            if (av == T(0)) continue;
            const T* b = B + l * n;
            for (size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C[m,k] += G[m,n] * B[k,n]^T. Materializes B^T so the inner loop runs
// unit-stride (the reduction form is ~10x slower on this compiler).
template <class T>
void gemm_nt(const T* G, const T* B, T* C, size_t m, size_t n, size_t k) {
    std::vector<T> bt(n * k);
    for (size_t j = 0; j < k; ++j)
        for (size_t l = 0; l < n; ++l) bt[l * k + j] = B[j * n + l];
    gemm_nn(G, bt.data(), C, m, n, k);
}

// C[k,n] += A[m,k]^T * G[m,n]
template <class T>
void gemm_tn(const T* A, const T* G, T* C, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const T* a = A + i * k;
        const T* g = G + i * n;
        for (size_t j = 0; j < k; ++j) {
            T av = a[j];
            if (av == T(0)) continue;
            T* c = C + j * n;
            for (size_t l = 0; l < n; ++l) c[l] += av * g[l];
        }
    }
}

} // namespace detail

// a: [..., k] (leading dims folded), b: [k, n] -> [..., n]
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape.size() < 2 || b.shape.size() != 2 || a.shape.back() != b.shape[0])
        throw usage_error("matmul: incompatible shapes " + shape_str(a.shape) + " and " +
                          shape_str(b.shape));
    size_t k = b.shape[0], n = b.shape[1];
    size_t m = a.size() / k;
    Shape oshape(a.shape.begin(), a.shape.end() - 1);
    oshape.push_back(n);
    auto out = std::make_shared<std::vector<T>>(m * n, T(0));
    detail::gemm_nn(a.data->data(), b.data->data(), out->data(), m, k, n);
    Tape<T>* tp = detail::common_tape<T>({&a, &b});
    if (!tp) return Tensor<T>(oshape, out);
    int pa = a.attached() ? a.node : -1;
    int pb = b.attached() ? b.node : -1;
    auto ad = a.data;
    auto bd = b.data;
    return detail::make_result<T>(tp, oshape, out,
                                  [pa, pb, ad, bd, m, k, n](Tape<T>& t, const std::vector<T>& g) {
                                      if (pa >= 0)
                                          detail::gemm_nt(g.data(), bd->data(), t.grad(pa).data(), m,
                                                          n, k);
                                      if (pb >= 0)
                                          detail::gemm_tn(ad->data(), g.data(), t.grad(pb).data(), m,
                                                          k, n);
                                  });
}

// Batched matmul: a [B,m,k], b [B,k,n] -> [B,m,n]
template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape.size() != 3 || b.shape.size() != 3 || a.shape[0] != b.shape[0] ||
        a.shape[2] != b.shape[1])
        throw usage_error("bmm: incompatible shapes " + shape_str(a.shape) + " and " +
                          shape_str(b.shape));
    size_t B = a.shape[0], m = a.shape[1], k = a.shape[2], n = b.shape[2];
    auto out = std::make_shared<std::vector<T>>(B * m * n, T(0));
    for (size_t bidx = 0; bidx < B; ++bidx)
        detail::gemm_nn(a.data->data() + bidx * m * k, b.data->data() + bidx * k * n,
                        out->data() + bidx * m * n, m, k, n);
    Tape<T>* tp = detail::common_tape<T>({&a, &b});
    if (!tp) return Tensor<T>({B, m, n}, out);
    int pa = a.attached() ? a.node : -1;
    int pb = b.attached() ? b.node : -1;
    auto ad = a.data;
    auto bd = b.data;
    return detail::make_result<T>(
        tp, {B, m, n}, out, [pa, pb, ad, bd, B, m, k, n](Tape<T>& t, const std::vector<T>& g) {
            for (size_t bidx = 0; bidx < B; ++bidx) {
                const T* gp = g.data() + bidx * m * n;
                if (pa >= 0)
                    detail::gemm_nt(gp, bd->data() + bidx * k * n,
                                    t.grad(pa).data() + bidx * m * k, m, n, k);
                if (pb >= 0)
                    detail::gemm_tn(ad->data() + bidx * m * k, gp,
                                    t.grad(pb).data() + bidx * k * n, m, k, n);
            }
        });
}

} // namespace gradroute

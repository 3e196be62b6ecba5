#include <atomic>
#include <cstdlib>
#include <string>

#include "cat/kernels.hpp"
#include "cat/tensor.hpp"

namespace cat::kernels {

namespace {

struct VTable {
    double (*dot)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*sumsq)(const double*, std::size_t);
    void (*vadd)(const double*, const double*, double*, std::size_t);
    void (*vsub)(const double*, const double*, double*, std::size_t);
    void (*vmul)(const double*, const double*, double*, std::size_t);
    void (*scal)(double, double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*relu_fwd)(const double*, double*, std::size_t);
    void (*relu_bwd)(const double*, const double*, double*, std::size_t);
    void (*gemm_nn)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
    void (*gemm_tn)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
    void (*gemm_nt)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
    void (*colsum_acc)(const double*, double*, std::size_t, std::size_t);
};

constexpr VTable kScalar = {
    scalar::dot,      scalar::sum,      scalar::sumsq,   scalar::vadd,
    scalar::vsub,     scalar::vmul,     scalar::scal,    scalar::axpy,
    scalar::relu_fwd, scalar::relu_bwd, scalar::gemm_nn, scalar::gemm_tn,
    scalar::gemm_nt,  scalar::colsum_acc,
};

#if defined(CAT_UDA_HAVE_AVX2)
constexpr VTable kAvx2 = {
    avx2::dot,      avx2::sum,      avx2::sumsq,   avx2::vadd,
    avx2::vsub,     avx2::vmul,     avx2::scal,    avx2::axpy,
    avx2::relu_fwd, avx2::relu_bwd, avx2::gemm_nn, avx2::gemm_tn,
    avx2::gemm_nt,  avx2::colsum_acc,
};
#endif

bool cpu_has_avx2_fma() {
#if defined(CAT_UDA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const VTable* vtable_for(Backend b) {
    switch (b) {
        case Backend::scalar: return &kScalar;
        case Backend::avx2:
#if defined(CAT_UDA_HAVE_AVX2)
            return &kAvx2;
#else
            break;
#endif
    }
    throw InternalError("kernel backend has no vtable");
}

std::atomic<const VTable*>& slot() {
    static std::atomic<const VTable*> s{nullptr};
    return s;
}

const VTable* resolve_initial() {
    Backend want = cpu_has_avx2_fma() ? Backend::avx2 : Backend::scalar;
    if (const char* env = std::getenv("CAT_UDA_KERNELS")) {
        std::string v(env);
        if (v == "scalar")
            want = Backend::scalar;
        else if (v == "avx2")
            want = Backend::avx2;
        else if (v != "auto" && !v.empty())
            throw ConfigError("CAT_UDA_KERNELS must be scalar, avx2, or auto; got '" + v + "'");
    }
    if (!available(want))
        throw ConfigError(std::string("kernel backend '") + name(want) +
                          "' requested via CAT_UDA_KERNELS is not available on this machine");
    return vtable_for(want);
}

const VTable* table() {
    const VTable* t = slot().load(std::memory_order_acquire);
    if (t == nullptr) {
        t = resolve_initial();
        slot().store(t, std::memory_order_release);
    }
    return t;
}

}  // namespace

bool available(Backend b) {
    switch (b) {
        case Backend::scalar: return true;
        case Backend::avx2: return cpu_has_avx2_fma();
    }
    return false;
}

Backend active() {
    return table() == &kScalar ? Backend::scalar : Backend::avx2;
}

void force(Backend b) {
    if (!available(b))
        throw ConfigError(std::string("kernel backend '") + name(b) +
                          "' is not available on this machine");
    slot().store(vtable_for(b), std::memory_order_release);
}

const char* name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "?";
}

double dot(const double* a, const double* b, std::size_t n) { return table()->dot(a, b, n); }
double sum(const double* a, std::size_t n) { return table()->sum(a, n); }
double sumsq(const double* a, std::size_t n) { return table()->sumsq(a, n); }
void vadd(const double* a, const double* b, double* out, std::size_t n) {
    table()->vadd(a, b, out, n);
}
void vsub(const double* a, const double* b, double* out, std::size_t n) {
    table()->vsub(a, b, out, n);
}
void vmul(const double* a, const double* b, double* out, std::size_t n) {
    table()->vmul(a, b, out, n);
}
void scal(double alpha, double* x, std::size_t n) { table()->scal(alpha, x, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) {
    table()->axpy(alpha, x, y, n);
}
void relu_fwd(const double* x, double* y, std::size_t n) { table()->relu_fwd(x, y, n); }
void relu_bwd(const double* x, const double* cot, double* dx, std::size_t n) {
    table()->relu_bwd(x, cot, dx, n);
}
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    table()->gemm_nn(a, b, c, m, k, n);
}
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    table()->gemm_tn(a, b, c, m, k, n);
}
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    table()->gemm_nt(a, b, c, m, k, n);
}
void colsum_acc(const double* a, double* out, std::size_t m, std::size_t n) {
    table()->colsum_acc(a, out, m, n);
}

}  // namespace cat::kernels

#include <cstdlib>
#include <cstring>

#include "kernels/kernels.h"

namespace ms::kern {

const Ops* avx2_table();  // defined in the -mavx2 TU

const Ops* avx2_ops_if_supported() {
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return avx2_table();
    return nullptr;
}

static const Ops* select() {
    const char* env = std::getenv("MSLDM_KERNELS");
    if (env && std::strcmp(env, "scalar") == 0) return &scalar_ops();
    const Ops* a = avx2_ops_if_supported();
    if (env && std::strcmp(env, "avx2") == 0 && !a) return &scalar_ops();  // no avx2: fall back
    return a ? a : &scalar_ops();
}

const Ops& ops() {
    static const Ops* table = select();
    return *table;
}

std::string active_kernels() { return ops().name; }

}  // namespace ms::kern

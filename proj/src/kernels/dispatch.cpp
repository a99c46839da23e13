#include "dula/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace dula::kernels {

const KernelTable* avx2_table_unchecked();

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* pick_default() {
    if (const char* env = std::getenv("DULA_KERNELS")) {
        const std::string want(env);
        if (want == "scalar") return &scalar();
        if (want == "avx2" && avx2() != nullptr) return avx2();
    }
    if (const KernelTable* t = avx2()) return t;
    return &scalar();
}

std::atomic<const KernelTable*>& current() {
    static std::atomic<const KernelTable*> table{pick_default()};
    return table;
}

}  // namespace

const KernelTable* avx2() {
    static const KernelTable* table = cpu_has_avx2() ? avx2_table_unchecked() : nullptr;
    return table;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(std::string_view name) {
    if (name == "scalar") {
        current().store(&scalar(), std::memory_order_release);
        return true;
    }
    if (name == "avx2" && avx2() != nullptr) {
        current().store(avx2(), std::memory_order_release);
        return true;
    }
    return false;
}

}  // namespace dula::kernels

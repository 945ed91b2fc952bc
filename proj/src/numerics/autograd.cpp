#include "avdit/numerics/autograd.hpp"

namespace avdit {

namespace {
thread_local Tape* g_active = nullptr;
}

Tape* active_tape() { return g_active; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (g_active == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t != nullptr && t->defined() && t->requires_grad()) return true;
    }
    return false;
}

void Tape::backward(Tensor& loss, double seed) {
    if (loss.numel() != 1) throw Error("backward: loss must be a scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw Error("backward: loss does not depend on any tracked tensor");
    loss.grad()[0] += seed;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

}  // namespace avdit

#pragma once

#include <functional>
#include <vector>

#include "avdit/numerics/tensor.hpp"

namespace avdit {

/// Reverse-mode tape. Ops executed while a tape is active on the calling
/// thread (see TapeScope) and touching a tensor with requires_grad append a
/// backward closure. The tape is reset explicitly between steps.
class Tape {
public:
    void record(std::function<void()> backward_fn) { entries_.push_back(std::move(backward_fn)); }

    /// Seeds d(loss)/d(loss) = seed and runs every recorded closure in reverse.
    void backward(Tensor& loss, double seed = 1.0);

    void clear() { entries_.clear(); }
    std::size_t size() const { return entries_.size(); }

private:
    std::vector<std::function<void()>> entries_;
};

/// Activates a tape on this thread for the scope's lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

Tape* active_tape();

/// True when an op with these inputs should be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);

}  // namespace avdit

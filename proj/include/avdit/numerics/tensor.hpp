#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <new>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace avdit {

/// Raised for contract violations anywhere in the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

using Rng = std::mt19937_64;

/// 64-byte aligned storage. Eigen's vectorized reductions peel a prefix that
/// depends on pointer alignment, so unaligned buffers would make summation
/// order (and therefore results) vary from run to run.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::size_t kAlign = 64;

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kAlign}));
    }
    void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t{kAlign}); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

/// Dense row-major f64 tensor. Copies share storage (handle semantics), so a
/// parameter captured by an op and the module that owns it see the same
/// data and the same gradient buffer. Use clone() for a deep copy.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor randn(const Shape& shape, Rng& rng, double std = 1.0);
    static Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<double> data();
    std::span<const double> data() const;
    double* ptr() { return data().data(); }
    const double* ptr() const { return data().data(); }
    double& operator[](std::size_t i) { return data()[i]; }
    double operator[](std::size_t i) const { return data()[i]; }
    double item() const;

    bool requires_grad() const;
    const Tensor& set_requires_grad(bool on) const;
    bool has_grad() const;
    /// Gradient buffer, allocated (zeroed) on first access.
    /// Gradients are state of the shared storage, so this is const.
    std::span<double> grad() const;
    void zero_grad() const;

    /// Throws Error naming `where` if any element is NaN or infinite.
    void validate(std::string_view where) const;
    bool all_finite() const;

    Tensor clone() const;
    /// Deep copy without gradient tracking.
    Tensor detach() const;
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
    bool bitwise_equal(const Tensor& other) const;

    struct Impl {
        Shape shape;
        Buffer data;
        Buffer grad;
        bool requires_grad = false;
    };
    const std::shared_ptr<Impl>& impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<Impl> impl_;
    Impl& checked() const;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(std::span<const double> v);
double relative_l2(const Tensor& approx, const Tensor& ref);

}  // namespace avdit

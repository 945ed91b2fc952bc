#include "avdit/numerics/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace avdit {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<Impl>()) {
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<Impl>()) {
    if (values.size() != shape_numel(shape)) {
        throw Error("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data.assign(values.begin(), values.end());
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::randn(const Shape& shape, Rng& rng, double std) {
    Tensor t(shape);
    std::normal_distribution<double> dist(0.0, std);
    for (auto& x : t.data()) x = dist(rng);
    return t;
}

Tensor Tensor::uniform(const Shape& shape, Rng& rng, double lo, double hi) {
    Tensor t(shape);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& x : t.data()) x = dist(rng);
    return t;
}

Tensor::Impl& Tensor::checked() const {
    if (!impl_) throw Error("tensor: use of undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw Error("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return checked().data.size(); }

std::span<double> Tensor::data() { return checked().data; }
std::span<const double> Tensor::data() const { return checked().data; }

double Tensor::item() const {
    if (numel() != 1) throw Error("tensor: item() on shape " + shape_str(shape()));
    return checked().data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

const Tensor& Tensor::set_requires_grad(bool on) const {
    checked().requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<double> Tensor::grad() const {
    auto& im = checked();
    if (im.grad.size() != im.data.size()) im.grad.assign(im.data.size(), 0.0);
    return im.grad;
}

void Tensor::zero_grad() const {
    auto& im = checked();
    std::fill(im.grad.begin(), im.grad.end(), 0.0);
}

bool Tensor::all_finite() const {
    for (double x : data()) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void Tensor::validate(std::string_view where) const {
    const auto d = data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!std::isfinite(d[i])) {
            throw Error(std::string(where) + ": non-finite value at flat index " + std::to_string(i) + " of " +
                        shape_str(shape()));
        }
    }
}

Tensor Tensor::clone() const {
    auto im = std::make_shared<Impl>(checked());
    return Tensor(std::move(im));
}

Tensor Tensor::detach() const {
    auto im = std::make_shared<Impl>();
    im->shape = shape();
    im->data = checked().data;
    return Tensor(std::move(im));
}

bool Tensor::bitwise_equal(const Tensor& other) const {
    if (shape() != other.shape()) return false;
    return std::memcmp(ptr(), other.ptr(), numel() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw Error("max_abs_diff: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double relative_l2(const Tensor& approx, const Tensor& ref) {
    if (approx.shape() != ref.shape()) throw Error("relative_l2: shape mismatch");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < ref.numel(); ++i) {
        const double d = approx[i] - ref[i];
        num += d * d;
        den += ref[i] * ref[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace avdit

#include "cdmamba/tensor.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "cdmamba/error.hpp"

namespace cdmamba {

namespace {

#ifdef NDEBUG
std::atomic<bool> g_finite_check{false};
#else
std::atomic<bool> g_finite_check{true};
#endif

thread_local Tape* t_current_tape = nullptr;

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size()) {
        throw InputError("tensor of shape " + to_string(shape) + " needs " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return impl;
}

static_assert(std::endian::native == std::endian::little, "tensor dumps assume a little-endian host");

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor make_tensor(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = cdmamba::numel(shape);
    return Tensor(new_impl(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = cdmamba::numel(shape);
    return Tensor(new_impl(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    return Tensor(new_impl(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(new_impl({1}, {value}, requires_grad));
}

TensorImpl& Tensor::impl() const {
    if (!impl_) throw UsageError("access to an undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw InputError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
    }
    return s[axis];
}

double Tensor::item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + to_string(shape()));
    return impl().data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    impl().requires_grad = on;
    return *this;
}

std::span<double> Tensor::mutable_grad() {
    auto& im = impl();
    if (im.grad.empty()) im.grad.assign(im.data.size(), 0.0);
    return im.grad;
}

void Tensor::zero_grad() {
    auto& im = impl();
    std::fill(im.grad.begin(), im.grad.end(), 0.0);
}

Tensor Tensor::grad_tensor() const {
    auto& im = impl();
    if (im.grad.empty()) return zeros(im.shape);
    return from(im.shape, im.grad);
}

Tensor Tensor::detach() const {
    auto& im = impl();
    return from(im.shape, im.data);
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : previous_(t_current_tape) { t_current_tape = this; }

Tape::~Tape() { t_current_tape = previous_; }

Tape* Tape::current() noexcept { return t_current_tape; }

void Tape::record(std::string op, std::vector<std::shared_ptr<TensorImpl>> inputs,
                  std::shared_ptr<TensorImpl> output, BackwardFn fn) {
    if (consumed_) throw UsageError("recording '" + op + "' onto a consumed tape");
    nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw UsageError("backward called twice on the same tape");
    if (loss.numel() != 1) {
        throw UsageError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
    }
    consumed_ = true;
    // Detach from the thread so ops run inside backward closures are not recorded.
    Tape* saved = t_current_tape;
    t_current_tape = nullptr;
    try {
        auto& root = loss.impl();
        if (root.grad.empty()) root.grad.assign(1, 0.0);
        root.grad[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (it->output->grad.empty()) continue;
            it->fn(it->output->grad);
        }
    } catch (...) {
        t_current_tape = saved;
        throw;
    }
    t_current_tape = saved;
}

// ---------------------------------------------------------------------------

void set_finite_check(bool enabled) noexcept { g_finite_check.store(enabled); }
bool finite_check_enabled() noexcept { return g_finite_check.load(); }

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!os) throw DataError("write failed for '" + path + "'");
}

Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path + "'");
    auto rank = read_u32(is);
    if (!is || rank > 16) throw DataError("'" + path + "' is not a tensor dump");
    Shape shape(rank);
    for (auto& d : shape) d = read_u32(is);
    std::vector<double> values(numel(shape));
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) throw DataError("'" + path + "' is truncated");
    return Tensor::from(std::move(shape), std::move(values));
}

namespace detail {

bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (t_current_tape == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values) {
    auto impl = new_impl(std::move(shape), std::move(values), false);
    impl->op = op;
    if (g_finite_check.load(std::memory_order_relaxed)) {
        for (double v : impl->data) {
            if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite value produced by '") + op + "'");
        }
    }
    return make_tensor(std::move(impl));
}

void record(const Tensor& out, std::vector<Tensor> inputs, Tape::BackwardFn fn) {
    Tape* tape = t_current_tape;
    if (tape == nullptr) return;
    out.impl().requires_grad = true;
    std::vector<std::shared_ptr<TensorImpl>> impls;
    impls.reserve(inputs.size());
    for (auto& t : inputs) impls.push_back(t.impl_ptr());
    tape->record(out.op_name(), std::move(impls), out.impl_ptr(), std::move(fn));
}

std::span<double> grad_sink(const Tensor& t) {
    if (!t.defined() || !t.requires_grad()) return {};
    auto& im = t.impl();
    if (im.grad.empty()) im.grad.assign(im.data.size(), 0.0);
    return im.grad;
}

}  // namespace detail

}  // namespace cdmamba

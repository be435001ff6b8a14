#include "graphonomy/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace graphonomy {

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

// Op implementations get private access to Tensor and Tape through here.
struct OpAccess {
    static Tensor make(Shape shape, std::shared_ptr<const std::vector<double>> data,
                       Tape* tape, int node) {
        return Tensor(std::move(shape), std::move(data), tape, node);
    }
    static std::shared_ptr<const std::vector<double>> data(const Tensor& t) {
        return t.data_;
    }
    static int add_node(Tape& t, const char* kind, std::size_t size, Tape::BackFn back) {
        return t.add_node(kind, size, std::move(back));
    }
    static void acc(Tape& t, int id, const std::vector<double>& v, double s = 1.0) {
        t.accumulate(id, v, s);
    }
    static void acc_raw(Tape& t, int id, const double* v, std::size_t n) {
        t.accumulate_raw(id, v, n);
    }
};

namespace {

using Data = std::shared_ptr<const std::vector<double>>;

Data make_data(std::vector<double> v) {
    return std::make_shared<const std::vector<double>>(std::move(v));
}

// Resolves the tape shared by the tracked operands (nullptr if none).
Tape* common_tape(std::initializer_list<const Tensor*> ts) {
    Tape* tape = nullptr;
    for (const Tensor* t : ts) {
        if (!t->tracked()) continue;
        if (tape && t->tape() != tape)
            throw ContractError("operands recorded on different tapes");
        tape = t->tape();
    }
    return tape;
}

bool any_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->requires_grad()) return true;
    return false;
}

Tensor finish(Shape shape, std::vector<double> out, Tape* tape, bool record,
              const char* kind, Tape::BackFn back) {
    Data d = make_data(std::move(out));
    int node = -1;
    if (tape && record)
        node = OpAccess::add_node(*tape, kind, d->size(), std::move(back));
    return OpAccess::make(std::move(shape), std::move(d), tape, node);
}

void require_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2)
        throw ShapeError(std::string(what) + " expects a rank-2 tensor, got " +
                         shape_str(t.shape()));
}

}  // namespace

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::values(Shape shape, std::vector<double> data) {
    if (shape_size(shape) != data.size())
        throw ShapeError("value count " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    return Tensor(std::move(shape), make_data(std::move(data)), nullptr, -1);
}

Tensor Tensor::shared(Shape shape, std::shared_ptr<const std::vector<double>> data) {
    if (shape_size(shape) != data->size())
        throw ShapeError("value count " + std::to_string(data->size()) +
                         " does not match shape " + shape_str(shape));
    return Tensor(std::move(shape), std::move(data), nullptr, -1);
}

Tensor Tensor::zeros(Shape shape) {
    std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), make_data(std::vector<double>(n, 0.0)), nullptr, -1);
}

Tensor Tensor::full(Shape shape, double v) {
    std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), make_data(std::vector<double>(n, v)), nullptr, -1);
}

Tensor Tensor::identity(std::size_t n) {
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
    return values({n, n}, std::move(d));
}

std::size_t Tensor::size() const { return data_ ? data_->size() : 0; }

const std::vector<double>& Tensor::data() const {
    if (!data_) throw ContractError("access to undefined tensor");
    return *data_;
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return data()[r * shape_[1] + c];
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape_));
    return data()[0];
}

bool Tensor::same_values(const Tensor& other) const {
    if (shape_ != other.shape_) return false;
    const auto& a = data();
    const auto& b = other.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        // bit-level compare; also distinguishes +0/-0 and NaN payloads
        if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
    }
    return true;
}

// --- Tape -------------------------------------------------------------------

Tensor Tape::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    return leaf_shared(std::move(shape), make_data(std::move(values)), requires_grad);
}

Tensor Tape::leaf_shared(Shape shape, Data values, bool requires_grad) {
    if (shape_size(shape) != values->size())
        throw ShapeError("leaf data does not match shape " + shape_str(shape));
    int node = -1;
    if (requires_grad) node = add_node("leaf", values->size(), nullptr);
    return OpAccess::make(std::move(shape), std::move(values), this, node);
}

int Tape::add_node(const char* kind, std::size_t size, BackFn back) {
    nodes_.push_back(Node{kind, size, {}, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int node_id, const std::vector<double>& v, double s) {
    if (node_id < 0) return;
    auto& g = grad_buffer(node_id);
    if (s == 1.0) {
        for (std::size_t i = 0; i < v.size(); ++i) g[i] += v[i];
    } else {
        for (std::size_t i = 0; i < v.size(); ++i) g[i] += s * v[i];
    }
}

void Tape::accumulate_raw(int node_id, const double* v, std::size_t n) {
    if (node_id < 0) return;
    auto& g = grad_buffer(node_id);
    for (std::size_t i = 0; i < n; ++i) g[i] += v[i];
}

std::vector<double>& Tape::grad_buffer(int node_id) {
    Node& n = nodes_[static_cast<std::size_t>(node_id)];
    if (n.grad.empty()) n.grad.assign(n.size, 0.0);
    return n.grad;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward expects a scalar loss, got " + shape_str(loss.shape()));
    if (loss.tape() != this)
        throw ContractError("loss is not recorded on this tape");
    if (loss.node() < 0)
        throw ContractError("loss does not require grad (no differentiable inputs)");

    for (Node& n : nodes_) n.grad.clear();
    grad_buffer(loss.node())[0] = 1.0;

    for (int i = loss.node(); i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.grad.empty() || !n.back) continue;
        n.back(*this, n.grad);
    }
}

Tensor Tape::grad(const Tensor& t) const {
    if (!t.tracked() || t.tape() != this)
        throw ContractError("grad() for a tensor not on this tape");
    if (t.node() < 0) return Tensor::zeros(t.shape());
    const Node& n = nodes_[static_cast<std::size_t>(t.node())];
    if (n.grad.empty()) return Tensor::zeros(t.shape());
    return Tensor::values(t.shape(), n.grad);
}

// --- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));

    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = ad.data() + i * k;
        double* orow = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = bd.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }

    Tape* tape = common_tape({&a, &b});
    bool rec = tape && any_grad({&a, &b});
    auto pa = OpAccess::data(a);
    auto pb = OpAccess::data(b);
    int ia = a.node(), ib = b.node();
    return finish({m, n}, std::move(out), tape, rec, "matmul",
                  [pa, pb, ia, ib, m, k, n](Tape& t, const std::vector<double>& g) {
                      if (ia >= 0) {  // dA = G * B^T
                          std::vector<double> da(m * k, 0.0);
                          for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                  double s = 0.0;
                                  for (std::size_t j = 0; j < n; ++j)
                                      s += g[i * n + j] * (*pb)[p * n + j];
                                  da[i * k + p] = s;
                              }
                          OpAccess::acc(t, ia, da);
                      }
                      if (ib >= 0) {  // dB = A^T * G
                          std::vector<double> db(k * n, 0.0);
                          for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                  const double av = (*pa)[i * k + p];
                                  if (av == 0.0) continue;
                                  for (std::size_t j = 0; j < n; ++j)
                                      db[p * n + j] += av * g[i * n + j];
                              }
                          OpAccess::acc(t, ib, db);
                      }
                  });
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t r = a.dim(0), c = a.dim(1);
    const auto& ad = a.data();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = ad[i * c + j];

    Tape* tape = common_tape({&a});
    int ia = a.node();
    return finish({c, r}, std::move(out), tape, ia >= 0, "transpose",
                  [ia, r, c](Tape& t, const std::vector<double>& g) {
                      std::vector<double> da(r * c);
                      for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < c; ++j) da[i * c + j] = g[j * r + i];
                      OpAccess::acc(t, ia, da);
                  });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add shapes disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];

    Tape* tape = common_tape({&a, &b});
    int ia = a.node(), ib = b.node();
    return finish(a.shape(), std::move(out), tape, ia >= 0 || ib >= 0, "add",
                  [ia, ib](Tape& t, const std::vector<double>& g) {
                      OpAccess::acc(t, ia, g);
                      OpAccess::acc(t, ib, g);
                  });
}

Tensor add_bias(const Tensor& m, const Tensor& bias) {
    require_rank2(m, "add_bias");
    if (bias.rank() != 1 || bias.dim(0) != m.dim(1))
        throw ShapeError("add_bias expects bias {" + std::to_string(m.dim(1)) + "}, got " +
                         shape_str(bias.shape()));
    const std::size_t r = m.dim(0), c = m.dim(1);
    const auto& md = m.data();
    const auto& bd = bias.data();
    std::vector<double> out(md.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = md[i * c + j] + bd[j];

    Tape* tape = common_tape({&m, &bias});
    int im = m.node(), ib = bias.node();
    return finish(m.shape(), std::move(out), tape, im >= 0 || ib >= 0, "add_bias",
                  [im, ib, r, c](Tape& t, const std::vector<double>& g) {
                      OpAccess::acc(t, im, g);
                      if (ib >= 0) {
                          std::vector<double> db(c, 0.0);
                          for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < c; ++j) db[j] += g[i * c + j];
                          OpAccess::acc(t, ib, db);
                      }
                  });
}

Tensor scale(const Tensor& a, double c) {
    const auto& ad = a.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * ad[i];

    Tape* tape = common_tape({&a});
    int ia = a.node();
    return finish(a.shape(), std::move(out), tape, ia >= 0, "scale",
                  [ia, c](Tape& t, const std::vector<double>& g) {
                      OpAccess::acc(t, ia, g, c);
                  });
}

namespace {

Tensor activation_impl(const Tensor& x, double slope, const char* kind) {
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xd[i];
        out[i] = v >= 0.0 ? v : slope * v;
    }
    Tape* tape = common_tape({&x});
    if (tape) tape->note_kinks(xd);
    int ix = x.node();
    auto px = OpAccess::data(x);
    return finish(x.shape(), std::move(out), tape, ix >= 0, kind,
                  [ix, px, slope](Tape& t, const std::vector<double>& g) {
                      std::vector<double> dx(g.size());
                      for (std::size_t i = 0; i < g.size(); ++i)
                          dx[i] = (*px)[i] > 0.0 ? g[i] : slope * g[i];
                      OpAccess::acc(t, ix, dx);
                  });
}

}  // namespace

Tensor relu(const Tensor& x) { return activation_impl(x, 0.0, "relu"); }

Tensor leaky_relu(const Tensor& x, double slope) {
    if (!(slope > 0.0 && slope < 1.0))
        throw InputError("leaky_relu slope must be in (0,1), got " + std::to_string(slope));
    return activation_impl(x, slope, "leaky_relu");
}

namespace {

Tensor softmax_impl(const Tensor& x, const Tensor* mask) {
    require_rank2(x, "softmax_rows");
    const std::size_t r = x.dim(0), c = x.dim(1);
    const std::vector<double>* md = nullptr;
    if (mask) {
        if (mask->shape() != x.shape())
            throw ShapeError("softmax mask shape " + shape_str(mask->shape()) +
                             " does not match input " + shape_str(x.shape()));
        md = &mask->data();
    }
    const auto& xd = x.data();
    std::vector<double> out(xd.size(), 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j)
            if (!md || (*md)[i * c + j] != 0.0) mx = std::max(mx, xd[i * c + j]);
        if (mx == -std::numeric_limits<double>::infinity())
            throw ContractError("softmax row " + std::to_string(i) + " is fully masked");
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j)
            if (!md || (*md)[i * c + j] != 0.0) {
                out[i * c + j] = std::exp(xd[i * c + j] - mx);
                denom += out[i * c + j];
            }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= denom;
    }

    Tape* tape = common_tape({&x});
    int ix = x.node();
    Data yd = make_data(out);  // backward needs the forward output
    int node = -1;
    if (tape && ix >= 0) {
        node = OpAccess::add_node(
            *tape, "softmax_rows", yd->size(),
            [ix, yd, r, c](Tape& t, const std::vector<double>& g) {
                std::vector<double> dx(g.size());
                for (std::size_t i = 0; i < r; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * (*yd)[i * c + j];
                    for (std::size_t j = 0; j < c; ++j)
                        dx[i * c + j] = (*yd)[i * c + j] * (g[i * c + j] - dot);
                }
                OpAccess::acc(t, ix, dx);
            });
    }
    return OpAccess::make({r, c}, std::move(yd), tape, node);
}

}  // namespace

Tensor softmax_rows(const Tensor& x) { return softmax_impl(x, nullptr); }

Tensor softmax_rows_masked(const Tensor& x, const Tensor& mask) {
    return softmax_impl(x, &mask);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() || a.rank() == 0)
        throw ShapeError("concat_channels rank mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::size_t rank = a.rank();
    for (std::size_t i = 0; i + 1 < rank; ++i)
        if (a.dim(i) != b.dim(i))
            throw ShapeError("concat_channels leading dimensions disagree: " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t ca = a.dim(rank - 1), cb = b.dim(rank - 1);
    std::size_t rows = 1;
    for (std::size_t i = 0; i + 1 < rank; ++i) rows *= a.dim(i);

    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(rows * (ca + cb));
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy_n(ad.data() + i * ca, ca, out.data() + i * (ca + cb));
        std::copy_n(bd.data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
    }
    Shape oshape = a.shape();
    oshape[rank - 1] = ca + cb;

    Tape* tape = common_tape({&a, &b});
    int ia = a.node(), ib = b.node();
    return finish(std::move(oshape), std::move(out), tape, ia >= 0 || ib >= 0,
                  "concat_channels",
                  [ia, ib, rows, ca, cb](Tape& t, const std::vector<double>& g) {
                      if (ia >= 0) {
                          std::vector<double> da(rows * ca);
                          for (std::size_t i = 0; i < rows; ++i)
                              std::copy_n(g.data() + i * (ca + cb), ca, da.data() + i * ca);
                          OpAccess::acc(t, ia, da);
                      }
                      if (ib >= 0) {
                          std::vector<double> db(rows * cb);
                          for (std::size_t i = 0; i < rows; ++i)
                              std::copy_n(g.data() + i * (ca + cb) + ca, cb, db.data() + i * cb);
                          OpAccess::acc(t, ib, db);
                      }
                  });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw ShapeError("reshape from " + shape_str(x.shape()) + " to incompatible " +
                         shape_str(shape));
    Tape* tape = common_tape({&x});
    int ix = x.node();
    int node = -1;
    if (tape && ix >= 0) {
        node = OpAccess::add_node(*tape, "reshape", x.size(),
                                  [ix](Tape& t, const std::vector<double>& g) {
                                      OpAccess::acc(t, ix, g);
                                  });
    }
    return OpAccess::make(std::move(shape), OpAccess::data(x), tape, node);
}

Tensor sum(const Tensor& x) {
    const auto& xd = x.data();
    double s = 0.0;
    for (double v : xd) s += v;

    Tape* tape = common_tape({&x});
    int ix = x.node();
    std::size_t n = xd.size();
    return finish({1}, {s}, tape, ix >= 0, "sum",
                  [ix, n](Tape& t, const std::vector<double>& g) {
                      std::vector<double> dx(n, g[0]);
                      OpAccess::acc(t, ix, dx);
                  });
}

Tensor mean(const Tensor& x) {
    if (x.size() == 0) throw ContractError("mean of empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets) {
    require_rank2(logits, "cross_entropy");
    const std::size_t p = logits.dim(0), l = logits.dim(1);
    if (targets.size() != p)
        throw ShapeError("cross_entropy expects " + std::to_string(p) + " targets, got " +
                         std::to_string(targets.size()));
    for (std::size_t i = 0; i < p; ++i)
        if (targets[i] >= l)
            throw InputError("cross_entropy target " + std::to_string(targets[i]) +
                             " out of range for " + std::to_string(l) + " classes");

    const auto& xd = logits.data();
    auto probs = std::make_shared<std::vector<double>>(p * l);
    double loss = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        double mx = xd[i * l];
        for (std::size_t j = 1; j < l; ++j) mx = std::max(mx, xd[i * l + j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < l; ++j) {
            (*probs)[i * l + j] = std::exp(xd[i * l + j] - mx);
            denom += (*probs)[i * l + j];
        }
        for (std::size_t j = 0; j < l; ++j) (*probs)[i * l + j] /= denom;
        loss += std::log(denom) + mx - xd[i * l + targets[i]];
    }
    loss /= static_cast<double>(p);

    Tape* tape = common_tape({&logits});
    int ix = logits.node();
    auto tg = std::make_shared<const std::vector<std::size_t>>(targets);
    return finish({1}, {loss}, tape, ix >= 0, "cross_entropy",
                  [ix, probs, tg, p, l](Tape& t, const std::vector<double>& g) {
                      const double s = g[0] / static_cast<double>(p);
                      std::vector<double> dx(p * l);
                      for (std::size_t i = 0; i < p; ++i)
                          for (std::size_t j = 0; j < l; ++j)
                              dx[i * l + j] =
                                  s * ((*probs)[i * l + j] - (j == (*tg)[i] ? 1.0 : 0.0));
                      OpAccess::acc(t, ix, dx);
                  });
}

Tensor normalize_rows(const Tensor& x, double eps) {
    require_rank2(x, "normalize_rows");
    const std::size_t r = x.dim(0), c = x.dim(1);
    const auto& xd = x.data();
    auto norms = std::make_shared<std::vector<double>>(r);
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < r; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < c; ++j) sq += xd[i * c + j] * xd[i * c + j];
        const double n = std::sqrt(sq);
        (*norms)[i] = n;
        const double d = n + eps;
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xd[i * c + j] / d;
    }

    Tape* tape = common_tape({&x});
    int ix = x.node();
    auto px = OpAccess::data(x);
    return finish({r, c}, std::move(out), tape, ix >= 0, "normalize_rows",
                  [ix, px, norms, eps, r, c](Tape& t, const std::vector<double>& g) {
                      std::vector<double> dx(r * c);
                      for (std::size_t i = 0; i < r; ++i) {
                          const double n = (*norms)[i];
                          const double d = n + eps;
                          double dot = 0.0;
                          for (std::size_t j = 0; j < c; ++j)
                              dot += g[i * c + j] * (*px)[i * c + j];
                          for (std::size_t j = 0; j < c; ++j) {
                              double v = g[i * c + j] / d;
                              if (n > 0.0) v -= (*px)[i * c + j] * dot / (n * d * d);
                              dx[i * c + j] = v;
                          }
                      }
                      OpAccess::acc(t, ix, dx);
                  });
}

Tensor outer_sum(const Tensor& u, const Tensor& v) {
    if (u.rank() != 1 || v.rank() != 1)
        throw ShapeError("outer_sum expects rank-1 operands, got " + shape_str(u.shape()) +
                         " and " + shape_str(v.shape()));
    const std::size_t n = u.dim(0), m = v.dim(0);
    const auto& ud = u.data();
    const auto& vd = v.data();
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = ud[i] + vd[j];

    Tape* tape = common_tape({&u, &v});
    int iu = u.node(), iv = v.node();
    return finish({n, m}, std::move(out), tape, iu >= 0 || iv >= 0, "outer_sum",
                  [iu, iv, n, m](Tape& t, const std::vector<double>& g) {
                      if (iu >= 0) {
                          std::vector<double> du(n, 0.0);
                          for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < m; ++j) du[i] += g[i * m + j];
                          OpAccess::acc(t, iu, du);
                      }
                      if (iv >= 0) {
                          std::vector<double> dv(m, 0.0);
                          for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < m; ++j) dv[j] += g[i * m + j];
                          OpAccess::acc(t, iv, dv);
                      }
                  });
}

Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
    require_rank2(x, "slice_rows");
    const std::size_t r = x.dim(0), c = x.dim(1);
    if (r0 > r1 || r1 > r)
        throw InputError("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") out of range for " + shape_str(x.shape()));
    const auto& xd = x.data();
    std::vector<double> out(xd.begin() + static_cast<std::ptrdiff_t>(r0 * c),
                            xd.begin() + static_cast<std::ptrdiff_t>(r1 * c));

    Tape* tape = common_tape({&x});
    int ix = x.node();
    return finish({r1 - r0, c}, std::move(out), tape, ix >= 0, "slice_rows",
                  [ix, r0, r, c](Tape& t, const std::vector<double>& g) {
                      std::vector<double> dx(r * c, 0.0);
                      std::copy(g.begin(), g.end(), dx.begin() + static_cast<std::ptrdiff_t>(r0 * c));
                      OpAccess::acc(t, ix, dx);
                  });
}

void check_boxes(std::size_t h, std::size_t w, const std::vector<Box>& boxes) {
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const Box& b = boxes[i];
        if (b.y0 >= b.y1 || b.x0 >= b.x1 || b.y1 > h || b.x1 > w)
            throw InputError("region " + std::to_string(i) + " [" + std::to_string(b.y0) + "," +
                             std::to_string(b.x0) + "," + std::to_string(b.y1) + "," +
                             std::to_string(b.x1) + ") is degenerate or outside a " +
                             std::to_string(h) + "x" + std::to_string(w) + " map");
    }
}

std::vector<int> region_owners(std::size_t h, std::size_t w, const std::vector<Box>& boxes) {
    std::vector<int> owner(h * w, -1);
    for (std::size_t i = 0; i < boxes.size(); ++i)
        for (std::size_t y = boxes[i].y0; y < boxes[i].y1; ++y)
            for (std::size_t x = boxes[i].x0; x < boxes[i].x1; ++x)
                owner[y * w + x] = static_cast<int>(i);
    return owner;
}

Tensor region_mean_pool(const Tensor& x, const std::vector<Box>& boxes) {
    if (x.rank() != 3)
        throw ShapeError("region_mean_pool expects a {h,w,c} tensor, got " +
                         shape_str(x.shape()));
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2), k = boxes.size();
    check_boxes(h, w, boxes);

    const auto& xd = x.data();
    std::vector<double> out(k * c, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        const Box& b = boxes[i];
        for (std::size_t y = b.y0; y < b.y1; ++y)
            for (std::size_t px = b.x0; px < b.x1; ++px)
                for (std::size_t j = 0; j < c; ++j)
                    out[i * c + j] += xd[(y * w + px) * c + j];
        const double inv = 1.0 / static_cast<double>(b.area());
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= inv;
    }

    Tape* tape = common_tape({&x});
    int ix = x.node();
    auto bx = std::make_shared<const std::vector<Box>>(boxes);
    return finish({k, c}, std::move(out), tape, ix >= 0, "region_mean_pool",
                  [ix, bx, h, w, c](Tape& t, const std::vector<double>& g) {
                      std::vector<double> dx(h * w * c, 0.0);
                      for (std::size_t i = 0; i < bx->size(); ++i) {
                          const Box& b = (*bx)[i];
                          const double inv = 1.0 / static_cast<double>(b.area());
                          for (std::size_t y = b.y0; y < b.y1; ++y)
                              for (std::size_t px = b.x0; px < b.x1; ++px)
                                  for (std::size_t j = 0; j < c; ++j)
                                      dx[(y * w + px) * c + j] += inv * g[i * c + j];
                      }
                      OpAccess::acc(t, ix, dx);
                  });
}

Tensor region_concat(const Tensor& x, const Tensor& z, const std::vector<Box>& boxes) {
    if (x.rank() != 3)
        throw ShapeError("region_concat expects a {h,w,c} tensor, got " + shape_str(x.shape()));
    require_rank2(z, "region_concat");
    if (z.dim(0) != boxes.size())
        throw ShapeError("region_concat: " + std::to_string(boxes.size()) + " regions but " +
                         std::to_string(z.dim(0)) + " node features");
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2), d = z.dim(1);
    check_boxes(h, w, boxes);
    const std::vector<int> owner = region_owners(h, w, boxes);

    const auto& xd = x.data();
    const auto& zd = z.data();
    std::vector<double> out(h * w * (c + d), 0.0);
    for (std::size_t p = 0; p < h * w; ++p) {
        std::copy_n(xd.data() + p * c, c, out.data() + p * (c + d));
        if (owner[p] >= 0)
            std::copy_n(zd.data() + static_cast<std::size_t>(owner[p]) * d, d,
                        out.data() + p * (c + d) + c);
    }

    Tape* tape = common_tape({&x, &z});
    int ix = x.node(), iz = z.node();
    auto ow = std::make_shared<const std::vector<int>>(std::move(owner));
    std::size_t k = boxes.size();
    return finish({h, w, c + d}, std::move(out), tape, ix >= 0 || iz >= 0, "region_concat",
                  [ix, iz, ow, h, w, c, d, k](Tape& t, const std::vector<double>& g) {
                      if (ix >= 0) {
                          std::vector<double> dx(h * w * c);
                          for (std::size_t p = 0; p < h * w; ++p)
                              std::copy_n(g.data() + p * (c + d), c, dx.data() + p * c);
                          OpAccess::acc(t, ix, dx);
                      }
                      if (iz >= 0) {
                          std::vector<double> dz(k * d, 0.0);
                          for (std::size_t p = 0; p < h * w; ++p) {
                              const int o = (*ow)[p];
                              if (o < 0) continue;
                              for (std::size_t j = 0; j < d; ++j)
                                  dz[static_cast<std::size_t>(o) * d + j] += g[p * (c + d) + c + j];
                          }
                          OpAccess::acc(t, iz, dz);
                      }
                  });
}

}  // namespace graphonomy

#include "clothrl/distill/student.hpp"

#include <stdexcept>

#include "clothrl/util/rng.hpp"

namespace clothrl::distill {

void StudentConfig::validate() const {
    if (height < 16 || width < 16) throw std::invalid_argument("student input too small");
    if (height % 4 != 0 || width % 4 != 0)
        throw std::invalid_argument("student input sides must be divisible by 4");
}

StudentNet::StudentNet(const StudentConfig& config, std::uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(seed);
    enc1 = nn::Conv2dT<float>(3, 16, 3, 1, 1, rng);
    ln1 = nn::LayerNorm2dT<float>(16);
    enc2 = nn::Conv2dT<float>(16, 32, 3, 2, 1, rng);
    ln2 = nn::LayerNorm2dT<float>(32);
    enc3 = nn::Conv2dT<float>(32, 64, 3, 2, 1, rng);
    ln3 = nn::LayerNorm2dT<float>(64);
    mid = nn::Conv2dT<float>(64, 64, 3, 1, 1, rng);
    lnm = nn::LayerNorm2dT<float>(64);
    up1 = nn::TConv2dT<float>(64, 32, 4, 2, 1, rng);
    dec1 = nn::Conv2dT<float>(64, 32, 3, 1, 1, rng);
    lnd1 = nn::LayerNorm2dT<float>(32);
    up2 = nn::TConv2dT<float>(32, 16, 4, 2, 1, rng);
    dec2 = nn::Conv2dT<float>(32, 16, 3, 1, 1, rng);
    lnd2 = nn::LayerNorm2dT<float>(16);
    head = nn::Conv2dT<float>(16, 2, 1, 1, 0, rng);

    enc1.register_params(params, "enc1");
    ln1.register_params(params, "ln1");
    enc2.register_params(params, "enc2");
    ln2.register_params(params, "ln2");
    enc3.register_params(params, "enc3");
    ln3.register_params(params, "ln3");
    mid.register_params(params, "mid");
    lnm.register_params(params, "lnm");
    up1.register_params(params, "up1");
    dec1.register_params(params, "dec1");
    lnd1.register_params(params, "lnd1");
    up2.register_params(params, "up2");
    dec2.register_params(params, "dec2");
    lnd2.register_params(params, "lnd2");
    head.register_params(params, "head");
}

nn::Tensor StudentNet::forward(const nn::Tensor& x, Cache* cache) {
    if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != cfg.height || x.dim(3) != cfg.width) {
        throw std::invalid_argument("student forward: expected (N, 3, " +
                                    std::to_string(cfg.height) + ", " +
                                    std::to_string(cfg.width) + "), got " + nn::shape_str(x.shape));
    }
    Cache local;
    Cache& c = cache ? *cache : local;
    c.x = x;
    c.a1 = enc1.forward(c.x);
    c.n1 = ln1.forward(c.a1);
    c.g1 = nn::gelu(c.n1);
    c.a2 = enc2.forward(c.g1);
    c.n2 = ln2.forward(c.a2);
    c.g2 = nn::gelu(c.n2);
    c.a3 = enc3.forward(c.g2);
    c.n3 = ln3.forward(c.a3);
    c.g3 = nn::gelu(c.n3);
    c.m = mid.forward(c.g3);
    c.nm = lnm.forward(c.m);
    c.gm = nn::gelu(c.nm);
    c.u1 = up1.forward(c.gm);
    c.cat1 = nn::concat(c.u1, c.g2);
    c.d1 = dec1.forward(c.cat1);
    c.nd1 = lnd1.forward(c.d1);
    c.gd1 = nn::gelu(c.nd1);
    c.u2 = up2.forward(c.gd1);
    c.cat2 = nn::concat(c.u2, c.g1);
    c.d2 = dec2.forward(c.cat2);
    c.nd2 = lnd2.forward(c.d2);
    c.gd2 = nn::gelu(c.nd2);
    return head.forward(c.gd2);
}

void StudentNet::backward(const Cache& c, const nn::Tensor& dout) {
    nn::Tensor d = head.backward(c.gd2, dout);
    d = nn::gelu_backward(c.nd2, d);
    d = lnd2.backward(c.d2, d);
    d = dec2.backward(c.cat2, d);
    auto [du2, dg1_skip] = nn::concat_backward(d, c.u2.shape, c.g1.shape);
    d = up2.backward(c.gd1, du2);
    d = nn::gelu_backward(c.nd1, d);
    d = lnd1.backward(c.d1, d);
    d = dec1.backward(c.cat1, d);
    auto [du1, dg2_skip] = nn::concat_backward(d, c.u1.shape, c.g2.shape);
    d = up1.backward(c.gm, du1);
    d = nn::gelu_backward(c.nm, d);
    d = lnm.backward(c.m, d);
    d = mid.backward(c.g3, d);
    d = nn::gelu_backward(c.n3, d);
    d = ln3.backward(c.a3, d);
    d = enc3.backward(c.g2, d);
    for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] += dg2_skip.values[i];
    d = nn::gelu_backward(c.n2, d);
    d = ln2.backward(c.a2, d);
    d = enc2.backward(c.g1, d);
    for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] += dg1_skip.values[i];
    d = nn::gelu_backward(c.n1, d);
    d = ln1.backward(c.a1, d);
    enc1.backward(c.x, d);
}

void StudentNet::copy_values_from(const StudentNet& other) {
    if (!(cfg == other.cfg)) throw std::invalid_argument("student configs differ");
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        params.entries[i].tensor->values = other.params.entries[i].tensor->values;
    }
}

}  // namespace clothrl::distill

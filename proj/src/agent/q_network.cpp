#include "clothrl/agent/q_network.hpp"

#include <stdexcept>

#include "clothrl/util/rng.hpp"

namespace clothrl::agent {

void QNetworkConfig::validate() const {
    if (grid_side < 4 || grid_side % 4 != 0) {
        throw std::invalid_argument("grid_side must be a positive multiple of 4");
    }
    if (place_side < 4 || place_side % 4 != 0) {
        throw std::invalid_argument("place_side must be a positive multiple of 4");
    }
    if (latent <= 0 || objectives <= 0) throw std::invalid_argument("bad network dims");
}

namespace {

int conv_chain_side(int image_side) {
    const int s1 = nn::Conv2dT<float>::out_size(image_side, 5, 2, 2);
    return nn::Conv2dT<float>::out_size(s1, 3, 2, 1);
}

}  // namespace

int QNetwork::encoder_flat() const { return 32 * conv_chain_side(image_side()) * conv_chain_side(image_side()); }

QNetwork::QNetwork(const QNetworkConfig& config, std::uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(seed);
    const int gs = cfg.grid_side / 4;
    const int ps = cfg.place_side / 4;

    conv1 = nn::Conv2dT<float>(3, 16, 5, 2, 2, rng);
    ln1 = nn::LayerNorm2dT<float>(16);
    conv2 = nn::Conv2dT<float>(16, 32, 3, 2, 1, rng);
    ln2 = nn::LayerNorm2dT<float>(32);
    enc_fc = nn::LinearT<float>(encoder_flat(), cfg.latent, rng);
    ln3 = nn::LayerNormT<float>(cfg.latent);

    pick_fc = nn::LinearT<float>(cfg.latent, 8 * gs * gs, rng);
    pick_ln = nn::LayerNormT<float>(8 * gs * gs);
    pick_tc1 = nn::TConv2dT<float>(8, 16, 4, 2, 1, rng);
    pick_tln = nn::LayerNorm2dT<float>(16);
    pick_tc2 = nn::TConv2dT<float>(16, cfg.objectives, 4, 2, 1, rng);

    place_fc = nn::LinearT<float>(cfg.latent + kPickEncoding, 8 * ps * ps, rng);
    place_ln = nn::LayerNormT<float>(8 * ps * ps);
    place_tc1 = nn::TConv2dT<float>(8, 16, 4, 2, 1, rng);
    place_tln = nn::LayerNorm2dT<float>(16);
    place_tc2 = nn::TConv2dT<float>(16, cfg.objectives, 4, 2, 1, rng);

    conv1.register_params(params, "encoder.conv1");
    ln1.register_params(params, "encoder.ln1");
    conv2.register_params(params, "encoder.conv2");
    ln2.register_params(params, "encoder.ln2");
    enc_fc.register_params(params, "encoder.fc");
    ln3.register_params(params, "encoder.ln3");
    pick_fc.register_params(params, "pick.fc");
    pick_ln.register_params(params, "pick.ln");
    pick_tc1.register_params(params, "pick.tconv1");
    pick_tln.register_params(params, "pick.tln");
    pick_tc2.register_params(params, "pick.tconv2");
    place_fc.register_params(params, "place.fc");
    place_ln.register_params(params, "place.ln");
    place_tc1.register_params(params, "place.tconv1");
    place_tln.register_params(params, "place.tln");
    place_tc2.register_params(params, "place.tconv2");
}

nn::Tensor QNetwork::encode(const nn::Tensor& x, EncoderCache* cache) {
    if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != image_side() || x.dim(3) != image_side()) {
        throw std::invalid_argument("QNetwork::encode: expected (N, 3, " +
                                    std::to_string(image_side()) + ", " +
                                    std::to_string(image_side()) + "), got " +
                                    nn::shape_str(x.shape));
    }
    const int n = x.dim(0);
    nn::Tensor c1 = conv1.forward(x);
    nn::Tensor n1 = ln1.forward(c1);
    nn::Tensor g1 = nn::gelu(n1);
    nn::Tensor c2 = conv2.forward(g1);
    nn::Tensor n2 = ln2.forward(c2);
    nn::Tensor flat = nn::gelu(n2);
    flat.shape = {n, encoder_flat()};
    nn::Tensor f1 = enc_fc.forward(flat);
    nn::Tensor n3 = ln3.forward(f1);
    nn::Tensor latent = nn::gelu(n3);
    if (cache) {
        cache->x = x;
        cache->c1 = std::move(c1);
        cache->n1 = std::move(n1);
        cache->g1 = std::move(g1);
        cache->c2 = std::move(c2);
        cache->n2 = std::move(n2);
        cache->flat = std::move(flat);
        cache->f1 = std::move(f1);
        cache->n3 = std::move(n3);
    }
    return latent;
}

void QNetwork::encode_backward(const EncoderCache& cache, const nn::Tensor& dlatent) {
    nn::Tensor dn3 = nn::gelu_backward(cache.n3, dlatent);
    nn::Tensor df1 = ln3.backward(cache.f1, dn3);
    nn::Tensor dflat = enc_fc.backward(cache.flat, df1);
    dflat.shape = cache.n2.shape;
    nn::Tensor dn2 = nn::gelu_backward(cache.n2, dflat);
    nn::Tensor dc2 = ln2.backward(cache.c2, dn2);
    nn::Tensor dg1 = conv2.backward(cache.g1, dc2);
    nn::Tensor dn1 = nn::gelu_backward(cache.n1, dg1);
    nn::Tensor dc1 = ln1.backward(cache.c1, dn1);
    conv1.backward(cache.x, dc1);
}

namespace {

struct HeadLayers {
    nn::LinearT<float>& fc;
    nn::LayerNormT<float>& ln;
    nn::TConv2dT<float>& tc1;
    nn::LayerNorm2dT<float>& tln;
    nn::TConv2dT<float>& tc2;
};

nn::Tensor head_forward(const HeadLayers& h, int seed_side, const nn::Tensor& in,
                        QNetwork::HeadCache* cache) {
    const int n = in.dim(0);
    nn::Tensor f1 = h.fc.forward(in);
    nn::Tensor n1 = h.ln.forward(f1);
    nn::Tensor g1 = nn::gelu(n1);
    g1.shape = {n, 8, seed_side, seed_side};
    nn::Tensor t1 = h.tc1.forward(g1);
    nn::Tensor tn1 = h.tln.forward(t1);
    nn::Tensor tg1 = nn::gelu(tn1);
    nn::Tensor out = h.tc2.forward(tg1);
    if (cache) {
        cache->in = in;
        cache->f1 = std::move(f1);
        cache->n1 = std::move(n1);
        cache->g1 = std::move(g1);
        cache->t1 = std::move(t1);
        cache->tn1 = std::move(tn1);
        cache->tg1 = std::move(tg1);
    }
    return out;
}

nn::Tensor head_backward(const HeadLayers& h, const QNetwork::HeadCache& cache,
                         const nn::Tensor& dmaps) {
    nn::Tensor dtg1 = h.tc2.backward(cache.tg1, dmaps);
    nn::Tensor dtn1 = nn::gelu_backward(cache.tn1, dtg1);
    nn::Tensor dt1 = h.tln.backward(cache.t1, dtn1);
    nn::Tensor dg1 = h.tc1.backward(cache.g1, dt1);
    dg1.shape = cache.n1.shape;
    nn::Tensor dn1 = nn::gelu_backward(cache.n1, dg1);
    nn::Tensor df1 = h.ln.backward(cache.f1, dn1);
    return h.fc.backward(cache.in, df1);
}

}  // namespace

nn::Tensor QNetwork::pick_maps(const nn::Tensor& latent, HeadCache* cache) {
    HeadLayers h{pick_fc, pick_ln, pick_tc1, pick_tln, pick_tc2};
    return head_forward(h, cfg.grid_side / 4, latent, cache);
}

nn::Tensor QNetwork::place_maps(const nn::Tensor& latent, const nn::Tensor& pick_enc,
                                HeadCache* cache) {
    nn::Tensor in = nn::concat(latent, pick_enc);
    HeadLayers h{place_fc, place_ln, place_tc1, place_tln, place_tc2};
    return head_forward(h, cfg.place_side / 4, in, cache);
}

nn::Tensor QNetwork::pick_maps_backward(const HeadCache& cache, const nn::Tensor& dmaps) {
    HeadLayers h{pick_fc, pick_ln, pick_tc1, pick_tln, pick_tc2};
    return head_backward(h, cache, dmaps);
}

std::pair<nn::Tensor, nn::Tensor> QNetwork::place_maps_backward(const HeadCache& cache,
                                                                const nn::Tensor& dmaps) {
    HeadLayers h{place_fc, place_ln, place_tc1, place_tln, place_tc2};
    nn::Tensor din = head_backward(h, cache, dmaps);
    return nn::concat_backward(din, {din.dim(0), cfg.latent}, {din.dim(0), kPickEncoding});
}

void QNetwork::copy_values_from(const QNetwork& other) {
    if (!(cfg == other.cfg)) throw std::invalid_argument("QNetwork config mismatch in copy");
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        params.entries[i].tensor->values = other.params.entries[i].tensor->values;
    }
}

}  // namespace clothrl::agent

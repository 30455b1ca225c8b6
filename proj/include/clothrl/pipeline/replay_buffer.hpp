#pragma once

#include <stdexcept>
#include <vector>

#include "clothrl/pipeline/transition.hpp"
#include "clothrl/util/rng.hpp"

namespace clothrl::pipeline {

// Unprioritized ring buffer; pushes past capacity overwrite the oldest entry
// and sampling is uniform with replacement.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : cap_(capacity) {
        if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
        slots_.reserve(capacity);
    }

    std::size_t capacity() const { return cap_; }
    std::size_t size() const { return slots_.size(); }

    void push(Transition t) {
        if (slots_.size() < cap_) {
            slots_.push_back(std::move(t));
        } else {
            slots_[next_] = std::move(t);
        }
        next_ = (next_ + 1) % cap_;
    }

    const Transition& slot(std::size_t i) const { return slots_.at(i); }

    std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const {
        if (slots_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
        std::vector<const Transition*> out;
        out.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i)
            out.push_back(&slots_[rng.uniform_index(slots_.size())]);
        return out;
    }

private:
    std::vector<Transition> slots_;
    std::size_t cap_;
    std::size_t next_ = 0;
};

}  // namespace clothrl::pipeline

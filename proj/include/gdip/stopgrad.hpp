#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace gdip::stopgrad {

// Some forward quantities (min/max range stats, atmospheric light, dark
// channels) are treated as constants by the VJPs. Finite-difference checks
// must evaluate the matching surrogate: record those quantities on the base
// forward pass, then replay them during the perturbed evaluations.
struct Tape {
    enum class Mode { Record, Replay };
    Mode mode = Mode::Record;
    std::vector<std::vector<double>> blobs;
    std::size_t cursor = 0;

    void rewind_for_replay() {
        mode = Mode::Replay;
        cursor = 0;
    }
};

Tape*& current();

class Scope {
  public:
    explicit Scope(Tape* t) : prev_(current()) { current() = t; }
    ~Scope() { current() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

  private:
    Tape* prev_;
};

// Returns compute() normally; under a recording tape stores the result,
// under a replaying tape returns the stored value instead.
inline std::vector<double> frozen(const std::function<std::vector<double>()>& compute) {
    Tape* t = current();
    if (!t) return compute();
    if (t->mode == Tape::Mode::Record) {
        t->blobs.push_back(compute());
        return t->blobs.back();
    }
    if (t->cursor >= t->blobs.size())
        throw std::runtime_error("stopgrad tape: replay past end (forward structure changed)");
    return t->blobs[t->cursor++];
}

}  // namespace gdip::stopgrad

#include "gdip/stopgrad.hpp"

namespace gdip::stopgrad {

Tape*& current() {
    thread_local Tape* tape = nullptr;
    return tape;
}

}  // namespace gdip::stopgrad

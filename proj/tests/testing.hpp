#pragma once

// libtorch's logging header defines glog-style CHECK macros that abort on
// failure. Pull torch in first and drop them so doctest's assertions win.
#include <torch/torch.h>

#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LE
#undef CHECK_LT
#undef CHECK_GE
#undef CHECK_GT

#include <doctest.h>

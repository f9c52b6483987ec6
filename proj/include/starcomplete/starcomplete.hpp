#pragma once

#include "errors.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "tns_io.hpp"
#include "transform.hpp"
#include "mstar.hpp"
#include "sampling.hpp"
#include "parallel.hpp"
#include "asd.hpp"
#include "tasd.hpp"
#include "harness.hpp"

#pragma once

#include "hetlora/linalg/kernels.hpp"
#include "hetlora/linalg/matrix.hpp"
#include "hetlora/linalg/rng.hpp"
#include "hetlora/linalg/svd.hpp"

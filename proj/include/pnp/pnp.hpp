#pragma once

#include "pnp/admm.hpp"
#include "pnp/bench.hpp"
#include "pnp/config.hpp"
#include "pnp/conv.hpp"
#include "pnp/degrade.hpp"
#include "pnp/denoiser.hpp"
#include "pnp/error.hpp"
#include "pnp/fft.hpp"
#include "pnp/image.hpp"
#include "pnp/io.hpp"
#include "pnp/metrics.hpp"
#include "pnp/net.hpp"
#include "pnp/rng.hpp"
#include "pnp/solver.hpp"
#include "pnp/training.hpp"

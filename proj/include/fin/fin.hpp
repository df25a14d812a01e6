#pragma once

#include "fin/errors.hpp"
#include "fin/types.hpp"
#include "fin/rng.hpp"
#include "fin/parallel.hpp"
#include "fin/distributions.hpp"
#include "fin/model.hpp"
#include "fin/higher_order.hpp"
#include "fin/induced_prior.hpp"
#include "fin/diagnostics.hpp"
#include "fin/sampler.hpp"
#include "fin/geweke.hpp"
#include "fin/transform.hpp"
#include "fin/simulation.hpp"
#include "fin/io.hpp"

#pragma once

#include "ctbuq/config.hpp"
#include "ctbuq/diagnostics.hpp"
#include "ctbuq/errors.hpp"
#include "ctbuq/forward.hpp"
#include "ctbuq/geometry.hpp"
#include "ctbuq/inference.hpp"
#include "ctbuq/io.hpp"
#include "ctbuq/pipeline.hpp"
#include "ctbuq/priors.hpp"
#include "ctbuq/randfield.hpp"
#include "ctbuq/rng.hpp"
#include "ctbuq/svg.hpp"

#pragma once

#include <mvtl/distance/dtw.hpp>
#include <mvtl/distance/latent.hpp>
#include <mvtl/distance/sfa.hpp>

#pragma once

#include <mvtl/nn/layers.hpp>
#include <mvtl/nn/network.hpp>

#pragma once

#include <mvtl/dataset.hpp>
#include <mvtl/density.hpp>
#include <mvtl/distance.hpp>
#include <mvtl/error.hpp>
#include <mvtl/importance.hpp>
#include <mvtl/nn.hpp>
#include <mvtl/pipeline.hpp>
#include <mvtl/synthetic.hpp>

"""Embedding combiners: weight sharing attention and its rivals."""
from .combiners import (COMBINERS, KINDS, CNNCombiner, Combiner, CombinerConfig, ConstantWeightNet,
                        DPACombiner, ENSCombiner, FIXCombiner, FusionOutput, LINCombiner, MIXCombiner,
                        RESCombiner, SharedWeightNet, WSACombiner, build_combiner, make_adapter)
from .pool import ModelPool, Views, flat_size
from .trace import WeightRecord, trace_columns, weight_trace, write_trace_csv

__all__ = ["COMBINERS", "KINDS", "CNNCombiner", "Combiner", "CombinerConfig", "ConstantWeightNet",
           "DPACombiner", "ENSCombiner", "FIXCombiner", "FusionOutput", "LINCombiner", "MIXCombiner",
           "RESCombiner", "SharedWeightNet", "WSACombiner", "build_combiner", "make_adapter",
           "ModelPool", "Views", "flat_size", "WeightRecord", "trace_columns", "weight_trace",
           "write_trace_csv"]

"""Network definition: parameters, encodings, attention and the full model."""
from mstformer.models.embedding import ClipBatch
from mstformer.models.mst_former import MSTFormer, forward, predict_next
from mstformer.models.params import ModelParams, param_count, parameter_shapes

__all__ = ["ClipBatch", "MSTFormer", "ModelParams", "forward", "param_count", "parameter_shapes", "predict_next"]

"""
Cache pruning

Evicts the rows of pruned tokens from every layer at or after the first pruned layer.
Earlier layers keep their rows; eviction is permanent.
"""

import logging

from engine.core.kv_cache import KvCache
from engine.errors import ConfigurationError

from .keep_set import KeepSet

logger = logging.getLogger(__name__)


def prune_cache(cache: KvCache, keep: KeepSet, from_layer: int) -> KvCache:
    """
    Remove evicted rows from layers >= from_layer

    Args:
        cache: cache to prune (left untouched)
        keep: KeepSet over the rows of the scoring layer, from_layer - 1
            (layer 0 when from_layer is 0)
        from_layer: first layer that loses rows

    Returns:
        Pruned cache; the same object when keep holds every row

    Raises:
        ConfigurationError: keep does not match the scoring layer's rows, bad from_layer
    """
    if not 0 <= from_layer <= cache.n_layers:
        raise ConfigurationError(f"from_layer {from_layer} outside [0, {cache.n_layers}]")
    reference = cache.layers[cache.reference_layer(from_layer)]
    if keep.n_rows != reference.n_rows:
        raise ConfigurationError(
            f"keep set covers {keep.n_rows} rows, layer cache holds {reference.n_rows}"
        )
    if keep.is_full:
        return cache
    pruned = cache.retain_positions(keep.positions(reference.positions), from_layer)
    logger.info("[Pruning] evicted %d rows from layers >= %d",
                reference.n_rows - len(keep), from_layer)
    return pruned

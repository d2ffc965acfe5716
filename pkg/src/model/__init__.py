from .augmented_node import AugmentedNodeModel, LossWeights, SignalTrack

__all__ = ['AugmentedNodeModel', 'LossWeights', 'SignalTrack']

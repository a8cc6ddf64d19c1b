"""
@package src
@brief Package initializer for the Bridge Matching project.

This package contains modules for synthetic data generation, probability-path
schedules, target constructions, training, sampling, metrics, the Gaussian
oracle, export and visualization.
"""

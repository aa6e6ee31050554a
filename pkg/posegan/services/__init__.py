"""Geometry, data, losses, training and evaluation services"""

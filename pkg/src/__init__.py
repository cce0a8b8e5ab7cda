"""
xmodal: cross-modal scene networks at desk scale.
"""

__version__ = '0.2.0'

package com.google.common.collect;

public final class Range<C extends Comparable> {
  final Cut<C> lowerBound;
  final Cut<C> upperBound;

  public static <C extends Comparable<?>> Range<C> open(C lower, C upper) {
    return create(Cut.aboveValue(lower), Cut.belowValue(upper));
  }

  public static <C extends Comparable<?>> Range<C> closedOpen(C lower, C upper) {
    return create(Cut.belowValue(lower), Cut.belowValue(upper));
  }

  public BoundType lowerBoundType() {
    return lowerBound.typeAsLowerBound();
  }

  public boolean contains(C value) {
    checkNotNull(value);
    return lowerBound.isLessThan(value) && !upperBound.isLessThan(value);
  }
}

package org.demo.canvas.paint;

public abstract class MultipleGradientPaint implements Paint {
    protected final float[] fractions;
    protected final Color[] colors;

    protected MultipleGradientPaint(float[] fractions, Color[] colors) {
        if (fractions.length != colors.length || fractions.length < 2) {
            throw new IllegalArgumentException("need at least two stops");
        }
        this.fractions = fractions;
        this.colors = colors;
    }

    public int getStopCount() {
        return colors.length;
    }

    @Override
    public boolean isOpaque() {
        return true;
    }
}

package org.demo.canvas.paint;

public final class Color implements Paint {
    public static final Color BLACK = new Color(0, 0, 0);
    public static final Color RED = new Color(255, 0, 0);
    public static final Color BLUE = new Color(0, 0, 255);

    private final int r;
    private final int g;
    private final int b;

    public Color(int r, int g, int b) {
        this.r = r;
        this.g = g;
        this.b = b;
    }

    @Override
    public String describe() {
        return "color(" + r + "," + g + "," + b + ")";
    }

    @Override
    public boolean isOpaque() {
        return true;
    }
}

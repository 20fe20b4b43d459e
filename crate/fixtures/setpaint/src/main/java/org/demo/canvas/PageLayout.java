package org.demo.canvas;

public final class PageLayout {
    public static final PageLayout DEFAULT = new PageLayout(595f, 842f);

    private final float width;
    private final float height;

    private PageLayout(float width, float height) {
        this.width = width;
        this.height = height;
    }

    public static PageLayout custom(float width, float height) {
        if (width <= 0 || height <= 0) {
            throw new IllegalArgumentException("page size must be positive");
        }
        return new PageLayout(width, height);
    }

    public float getWidth() {
        return width;
    }

    public float getHeight() {
        return height;
    }
}

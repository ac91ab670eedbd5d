package demo;

public class Store {
    private final int size;

    public Store(int size) {
        this.size = size;
    }

    public int capacity() {
        return size * 2;
    }

    static class Entry {
        String key() {
            return "k";
        }
    }
}

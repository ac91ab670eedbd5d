class Emitter {
  emit(name) {
    return name;
  }
}

const listeners = {
  onClick: function () {
    return 1;
  },
};
